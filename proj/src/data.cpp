// SPDX-License-Identifier: Apache-2.0
/**
 * @file   data.cpp
 * @brief  Dataset files and the synthetic clue generator.
 */
#include <vtqa/data.hpp>
#include <vtqa/text_encoders.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

namespace vtqa {

using json = nlohmann::json;

void validate(const SampleRecord &r) {
  const auto objects = static_cast<std::size_t>(r.visual.rows());
  if (objects == 0)
    throw AlignmentError("sample " + r.id + ": no objects");
  if (r.object_names.size() != objects ||
      r.object_attributes.size() != objects)
    throw AlignmentError("sample " + r.id + ": " + std::to_string(objects) +
                         " visual rows, " +
                         std::to_string(r.object_names.size()) + " names, " +
                         std::to_string(r.object_attributes.size()) +
                         " attribute lists");
  if (r.paragraph.empty())
    throw DataError("sample " + r.id + ": empty paragraph");
  if (r.clue_index >= static_cast<int>(r.paragraph.size()))
    throw DataError("sample " + r.id + ": clue index out of range");
}

std::vector<std::string> flat_attributes(const SampleRecord &r) {
  std::vector<std::string> out;
  for (const auto &attrs : r.object_attributes)
    out.insert(out.end(), attrs.begin(), attrs.end());
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "sidecar and checkpoint I/O assume a little-endian host");

constexpr char kFeatureMagic[8] = {'V', 'T', 'Q', 'A', 'F', 'E', 'A', 'T'};

template <typename T> void write_pod(std::ostream &os, T v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T> T read_pod(std::istream &is, const std::string &what) {
  T v{};
  if (!is.read(reinterpret_cast<char *>(&v), sizeof(T)))
    throw DataError("truncated feature file while reading " + what);
  return v;
}

Tensor visual_from_json(const json &rows, const std::string &where) {
  if (!rows.is_array() || rows.empty())
    throw DataError(where + ": \"visual\" must be a non-empty array of rows");
  const std::size_t width = rows.front().size();
  Tensor v(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != width || width == 0)
      throw DataError(where + ": ragged \"visual\" row " + std::to_string(i));
    for (std::size_t j = 0; j < width; ++j)
      v(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j].get<double>();
  }
  return v;
}

json visual_to_json(const Tensor &v) {
  json rows = json::array();
  for (Index i = 0; i < v.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < v.cols(); ++j)
      row.push_back(v(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

SampleRecord record_from_json(const json &j, const std::string &where) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  if (j.contains("visual"))
    r.visual = visual_from_json(j.at("visual"), where);
  r.object_names = j.at("object_names").get<std::vector<std::string>>();
  r.object_attributes =
    j.at("object_attributes").get<std::vector<std::vector<std::string>>>();
  r.paragraph = j.at("paragraph").get<std::vector<std::string>>();
  r.question = j.at("question").get<std::string>();
  r.answer = j.at("answer").get<std::string>();
  r.clue_index = j.value("clue_index", -1);
  return r;
}

json record_to_json(const SampleRecord &r, bool inline_visual) {
  json j;
  j["id"] = r.id;
  if (inline_visual)
    j["visual"] = visual_to_json(r.visual);
  j["object_names"] = r.object_names;
  j["object_attributes"] = r.object_attributes;
  j["paragraph"] = r.paragraph;
  j["question"] = r.question;
  j["answer"] = r.answer;
  if (r.clue_index >= 0)
    j["clue_index"] = r.clue_index;
  return j;
}

} // namespace

Dataset load_dataset(const std::filesystem::path &samples,
                     const std::optional<std::filesystem::path> &features) {
  std::ifstream in(samples);
  if (!in)
    throw DataError("cannot open " + samples.string());
  std::map<std::string, Tensor> sidecar;
  if (features)
    sidecar = read_feature_sidecar(*features);

  Dataset out;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    const std::string where = samples.string() + ":" + std::to_string(line_no);
    SampleRecord r;
    try {
      r = record_from_json(json::parse(line), where);
    } catch (const json::exception &e) {
      throw DataError(where + ": malformed record (" + e.what() + ")");
    }
    if (r.visual.size() == 0) {
      auto it = sidecar.find(r.id);
      if (it == sidecar.end())
        throw DataError(where + ": no visual features for id " + r.id);
      r.visual = it->second;
    }
    validate(r);
    out.push_back(std::move(r));
  }
  return out;
}

void write_dataset(const Dataset &records, const std::filesystem::path &samples,
                   const std::optional<std::filesystem::path> &features) {
  std::ofstream out(samples, std::ios::binary);
  if (!out)
    throw DataError("cannot write " + samples.string());
  std::map<std::string, Tensor> sidecar;
  for (const auto &r : records) {
    out << record_to_json(r, !features).dump() << '\n';
    if (features)
      sidecar.emplace(r.id, r.visual);
  }
  if (!out)
    throw DataError("write failed for " + samples.string());
  if (features)
    write_feature_sidecar(sidecar, *features);
}

std::map<std::string, Tensor>
read_feature_sidecar(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open feature file " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw DataError(path.string() + ": bad feature file magic");
  const auto count = read_pod<std::uint64_t>(in, "record count");
  std::map<std::string, Tensor> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto id_len = read_pod<std::uint32_t>(in, "id length");
    std::string id(id_len, '\0');
    if (!in.read(id.data(), id_len))
      throw DataError("truncated feature file while reading an id");
    const auto rows = read_pod<std::uint32_t>(in, "object count");
    const auto cols = read_pod<std::uint32_t>(in, "feature width");
    std::vector<float> raw(static_cast<std::size_t>(rows) * cols);
    if (!in.read(reinterpret_cast<char *>(raw.data()),
                 static_cast<std::streamsize>(raw.size() * sizeof(float))))
      throw DataError("truncated feature file in record " + id);
    Tensor v = Eigen::Map<const MatrixX<float>>(raw.data(), rows, cols)
                 .cast<double>();
    out.emplace(std::move(id), std::move(v));
  }
  return out;
}

void write_feature_sidecar(const std::map<std::string, Tensor> &features,
                           const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write feature file " + path.string());
  out.write(kFeatureMagic, 8);
  write_pod<std::uint64_t>(out, features.size());
  for (const auto &[id, v] : features) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v.cols()));
    const MatrixX<float> f = v.cast<float>();
    out.write(reinterpret_cast<const char *>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!out)
    throw DataError("write failed for " + path.string());
}

void SynthConfig::validate() const {
  if (n_samples < 0)
    throw ConfigError("n_samples must be >= 0");
  if (!(clue_rate >= 0.0 && clue_rate <= 1.0))
    throw ConfigError("clue_rate must lie in [0, 1]");
  if (!(noise >= 0.0))
    throw ConfigError("noise must be >= 0");
  if (feature_dim < 1)
    throw ConfigError("feature_dim must be >= 1");
  if (min_objects < 1 || max_objects < min_objects)
    throw ConfigError("object range must satisfy 1 <= min <= max");
  if (static_cast<std::size_t>(max_objects) > names.size())
    throw ConfigError("max_objects exceeds the number of object names");
  if (train_fraction < 0.0 || val_fraction < 0.0 ||
      train_fraction + val_fraction > 1.0)
    throw ConfigError("split fractions must be non-negative and sum to <= 1");
  if (colors.empty() || counts.empty() || actions.empty() || looks.empty())
    throw ConfigError("attribute pools must be non-empty");
}

namespace {

enum class QuestionKind { Color, Count, Action };

struct SceneObject {
  std::string name, color, count, action, look;
};

template <typename T>
const T &pick(const std::vector<T> &pool, std::mt19937_64 &rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

std::string clue_sentence(QuestionKind kind, const SceneObject &o,
                          std::mt19937_64 &rng) {
  const bool alt = std::bernoulli_distribution(0.5)(rng);
  switch (kind) {
  case QuestionKind::Color:
    return alt ? "you can tell the " + o.name + " is " + o.color
               : "the " + o.name + " looks " + o.color + " in the light";
  case QuestionKind::Count:
    return alt ? "there are " + o.count + " " + o.name + "s in the scene"
               : "we see " + o.count + " " + o.name + "s close together";
  case QuestionKind::Action:
    return alt ? "the " + o.name + " is " + o.action + " right now"
               : "someone saw the " + o.name + " " + o.action + " there";
  }
  return {};
}

} // namespace

DatasetSplits generate_synthetic(const SynthConfig &config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::map<std::string, Vector> prototypes;
  for (const auto &name : config.names) {
    Vector p(config.feature_dim);
    for (Index i = 0; i < p.size(); ++i)
      p[i] = unit(rng);
    prototypes.emplace(name, std::move(p));
  }

  Dataset all;
  all.reserve(static_cast<std::size_t>(config.n_samples));
  std::uniform_int_distribution<int> n_objects(config.min_objects,
                                               config.max_objects);
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::bernoulli_distribution has_clue(config.clue_rate);

  for (int s = 0; s < config.n_samples; ++s) {
    std::vector<std::string> names = config.names;
    std::shuffle(names.begin(), names.end(), rng);
    names.resize(static_cast<std::size_t>(n_objects(rng)));

    std::vector<SceneObject> scene;
    for (const auto &name : names)
      scene.push_back({name, pick(config.colors, rng), pick(config.counts, rng),
                       pick(config.actions, rng), pick(config.looks, rng)});

    SampleRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn%06d", s);
    r.id = id;
    r.visual.resize(static_cast<Index>(scene.size()), config.feature_dim);
    for (std::size_t i = 0; i < scene.size(); ++i) {
      const Vector &proto = prototypes.at(scene[i].name);
      for (Index j = 0; j < config.feature_dim; ++j) {
        // Stored at float precision so the binary sidecar round-trips.
        const double value = proto[j] + config.noise * unit(rng);
        r.visual(static_cast<Index>(i), j) =
          static_cast<double>(static_cast<float>(value));
      }
      r.object_names.push_back(scene[i].name);
      r.object_attributes.push_back({scene[i].color, scene[i].action});
      r.paragraph.push_back("the " + scene[i].look + " " + scene[i].name +
                            " is in the picture");
    }

    const auto kind = static_cast<QuestionKind>(kind_dist(rng));
    const SceneObject &asked =
      scene[std::uniform_int_distribution<std::size_t>(0, scene.size() - 1)(rng)];
    switch (kind) {
    case QuestionKind::Color:
      r.question = "what color is the " + asked.name;
      r.answer = asked.color;
      break;
    case QuestionKind::Count:
      r.question = "how many " + asked.name + "s are there";
      r.answer = asked.count;
      break;
    case QuestionKind::Action:
      r.question = "what is the " + asked.name + " doing";
      r.answer = asked.action;
      break;
    }

    if (has_clue(rng)) {
      const auto at = std::uniform_int_distribution<std::size_t>(
        0, r.paragraph.size())(rng);
      r.paragraph.insert(r.paragraph.begin() + static_cast<std::ptrdiff_t>(at),
                         clue_sentence(kind, asked, rng));
      r.clue_index = static_cast<int>(at);
    }
    all.push_back(std::move(r));
  }

  const auto n = static_cast<std::size_t>(config.n_samples);
  const auto n_train =
    static_cast<std::size_t>(std::floor(config.train_fraction * n + 1e-9));
  const auto n_val = std::min(
    n - n_train, static_cast<std::size_t>(std::floor(config.val_fraction * n + 1e-9)));
  DatasetSplits splits;
  splits.train.assign(all.begin(), all.begin() + n_train);
  splits.val.assign(all.begin() + n_train, all.begin() + n_train + n_val);
  splits.test.assign(all.begin() + n_train + n_val, all.end());
  return splits;
}

} // namespace vtqa
