// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.cpp
 * @brief  Parameter layout, forward composition and checkpoint I/O.
 */
#include <vtqa/model.hpp>

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace vtqa {

using json = nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
  case Variant::VqaOnly:
    return "vqa";
  case Variant::TextQaOnly:
    return "textqa";
  case Variant::Vtqa:
    return "vtqa";
  }
  return "?";
}

Variant parse_variant(const std::string &s) {
  const std::string k = normalize_answer(s);
  if (k == "vqa" || k == "vqa_only")
    return Variant::VqaOnly;
  if (k == "textqa" || k == "textqa_only")
    return Variant::TextQaOnly;
  if (k == "vtqa")
    return Variant::Vtqa;
  throw ConfigError("unknown variant '" + s + "' (expected vqa, textqa or vtqa)");
}

ModelConfig ModelConfig::desk(Variant v) {
  ModelConfig c;
  c.variant = v;
  return c;
}

ModelConfig ModelConfig::paper(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.widths = Widths{2048, 2048, 1024, 512, 512, 300};
  return c;
}

void ModelConfig::validate() const {
  const Widths &w = widths;
  if (w.d < 1 || w.d_v < 1 || w.d_q < 1 || w.h_a < 1 || w.h_g < 1 || w.d_emb < 1)
    throw ConfigError("all widths must be positive");
  if (w.d != w.d_v)
    throw ConfigError("visual width d_v (" + std::to_string(w.d_v) +
                      ") must equal sentence width d (" + std::to_string(w.d) + ")");
  if (variant == Variant::Vtqa && !early_fusion)
    throw ConfigError("the vtqa variant requires early fusion");
  if (!(credit >= 0.0))
    throw ConfigError("credit must be >= 0");
  if (vocab_size < 2)
    throw ConfigError("vocab_size must include PAD and UNK (>= 2)");
  if (answer_count < 1)
    throw ConfigError("answer_count must be >= 1");
}

Tensor &ModelParams::at(const std::string &name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw ArgumentError("no parameter named " + name);
  return it->second;
}

const Tensor &ModelParams::at(const std::string &name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw ArgumentError("no parameter named " + name);
  return it->second;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for (const auto &[name, t] : tensors_)
    out.push_back(name);
  return out;
}

bool ModelParams::operator==(const ModelParams &other) const {
  if (tensors_.size() != other.tensors_.size())
    return false;
  for (const auto &[name, t] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end() || it->second.rows() != t.rows() ||
        it->second.cols() != t.cols() || it->second != t)
      return false;
  }
  return true;
}

namespace {

std::string leaf_name(const std::string &name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

constexpr const char *kGruParts[] = {"w_z", "u_z", "b_z", "w_r", "u_r",
                                     "b_r", "w_h", "u_h", "b_h"};

} // namespace

bool is_embedding(const std::string &name) {
  return name == "embedding" || name == "question_embedding";
}

bool is_bias(const std::string &name) {
  return leaf_name(name).rfind("b_", 0) == 0;
}

Index fan_in(const std::string &name, const Tensor &t) {
  (void)name;
  return t.cols() == 1 ? t.rows() : t.cols();
}

std::map<std::string, std::pair<Index, Index>>
parameter_shapes(const ModelConfig &config) {
  config.validate();
  const Widths &w = config.widths;
  std::map<std::string, std::pair<Index, Index>> s;
  s["embedding"] = {config.vocab_size, w.d_emb};
  if (!config.share_embeddings)
    s["question_embedding"] = {config.vocab_size, w.d_emb};

  auto add_gru = [&](const std::string &prefix, Index hidden) {
    for (const char *part : kGruParts) {
      const std::string p(part);
      const Index cols = p[0] == 'w' ? w.d_emb : p[0] == 'u' ? hidden : 1;
      s[prefix + "." + p] = {hidden, cols};
    }
  };
  add_gru("question_gru", w.d_q);
  if (config.uses_paragraph() || config.uses_properties())
    add_gru("sentence_gru", w.d);

  auto add_branch = [&](const std::string &prefix, Index width) {
    s[prefix + ".attention.w_sa"] = {w.h_a, width};
    s[prefix + ".attention.w_qa"] = {w.h_a, w.d_q};
    s[prefix + ".attention.w_a"] = {w.h_a, 1};
    s[prefix + ".gate.w_p"] = {w.h_g, width};
    s[prefix + ".gate.w_q"] = {w.h_g, w.d_q};
    s[prefix + ".gate.w_cls"] = {config.answer_count, w.h_g};
    s[prefix + ".gate.b_cls"] = {config.answer_count, 1};
  };
  if (config.uses_cross_attention())
    s["similarity.w_s"] = {3 * w.d, 1};
  if (config.uses_paragraph())
    add_branch("paragraph", config.uses_cross_attention() ? 2 * w.d : w.d);
  if (config.uses_visual())
    add_branch("visual", 2 * w.d);
  return s;
}

ModelParams init_params(const ModelConfig &config) {
  std::mt19937_64 rng(config.seed);
  ModelParams params;
  for (const auto &[name, shape] : parameter_shapes(config)) {
    Tensor t = Tensor::Zero(shape.first, shape.second);
    if (!is_bias(name)) {
      const double r =
        is_embedding(name) ? 0.1 : 1.0 / std::sqrt(static_cast<double>(fan_in(name, t)));
      std::uniform_real_distribution<double> u(-r, r);
      for (Index i = 0; i < t.size(); ++i)
        t.data()[i] = u(rng);
    }
    if (is_embedding(name))
      t.row(Vocabulary::kPad).setZero();
    params.set(name, std::move(t));
  }
  return params;
}

PreparedSample prepare(const SampleRecord &sample, const Vocabulary &words,
                       const AnswerVocabulary &answers,
                       const ModelConfig &config) {
  validate(sample);
  PreparedSample p;
  p.id = sample.id;
  p.question = tokenize(sample.question, words);
  for (const auto &s : sample.paragraph)
    p.paragraph.push_back(tokenize(s, words));
  for (std::size_t i = 0; i < sample.object_names.size(); ++i)
    p.properties.push_back(tokenize(
      make_property_sentence(sample.object_names[i], sample.object_attributes[i]),
      words));
  p.visual = sample.visual;
  p.target = answers.find(sample.answer).value_or(-1);
  p.recommendation = build_recommendation_list(
    sample.object_names, flat_attributes(sample), answers, config.credit);
  return p;
}

BoundParams::BoundParams(Tape &tape, const ModelParams &params, bool trainable)
    : tape_(&tape) {
  for (const auto &[name, t] : params)
    vars_.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
}

const Var &BoundParams::at(const std::string &name) const {
  auto it = vars_.find(name);
  if (it == vars_.end())
    throw ArgumentError("parameter " + name + " is not bound");
  return it->second;
}

void BoundParams::replace(const std::string &name, const Var &v) {
  const Var &old = at(name);
  if (old.rows() != v.rows() || old.cols() != v.cols())
    throw DimensionError("replace " + name + ": " + shape_string(v.value()) +
                         " for " + shape_string(old.value()));
  vars_.at(name) = v;
}

GruVars BoundParams::gru(const std::string &prefix) const {
  auto p = [&](const char *part) { return at(prefix + "." + part); };
  return GruVars{p("w_z"), p("u_z"), p("b_z"), p("w_r"), p("u_r"),
                 p("b_r"), p("w_h"), p("u_h"), p("b_h")};
}

AttentionVars BoundParams::attention(const std::string &prefix) const {
  const std::string a = prefix + ".attention.";
  return AttentionVars{at(a + "w_sa"), at(a + "w_qa"), at(a + "w_a")};
}

GateVars BoundParams::gate(const std::string &prefix) const {
  const std::string g = prefix + ".gate.";
  return GateVars{at(g + "w_p"), at(g + "w_q"), at(g + "w_cls"), at(g + "b_cls")};
}

ForwardTrace forward_on_tape(const BoundParams &params,
                             const ModelConfig &config,
                             const PreparedSample &sample) {
  Tape &tape = params.tape();
  const Var &words = params.at("embedding");
  const Var &question_words =
    config.share_embeddings ? words : params.at("question_embedding");
  const Var q = encode_question(sample.question, question_words,
                                params.gru("question_gru"));
  ForwardTrace trace;

  Var visual;
  if (config.uses_visual() || config.uses_cross_attention()) {
    if (sample.visual.cols() != config.widths.d_v)
      throw DimensionError("sample " + sample.id + ": visual features " +
                           shape_string(sample.visual) + " but d_v = " +
                           std::to_string(config.widths.d_v));
    visual = tape.constant(sample.visual);
  }

  if (config.uses_visual()) {
    Var rows;
    if (config.uses_properties()) {
      const Var props = encode_properties(sample.properties, visual.rows(),
                                          words, params.gru("sentence_gru"));
      rows = fuse_visual(visual, props);
    } else {
      rows = concat_cols(visual, tape.constant(Tensor::Zero(visual.rows(),
                                                            visual.cols())));
    }
    auto out = run_branch(rows, q, params.attention("visual"),
                          params.gate("visual"));
    trace.visual_alpha = out.alpha;
    trace.visual_logits = out.logits;
  }

  if (config.uses_paragraph()) {
    const Var paragraph =
      encode_paragraph(sample.paragraph, words, params.gru("sentence_gru"));
    Var rows = paragraph;
    if (config.uses_cross_attention()) {
      const Var sim = similarity(visual, paragraph, params.at("similarity.w_s"));
      rows = fuse_paragraph(paragraph, attend_paragraph_over_objects(sim, visual));
    }
    auto out = run_branch(rows, q, params.attention("paragraph"),
                          params.gate("paragraph"));
    trace.paragraph_alpha = out.alpha;
    trace.paragraph_logits = out.logits;
  }

  switch (config.variant) {
  case Variant::VqaOnly:
    trace.logits = *trace.visual_logits;
    break;
  case Variant::TextQaOnly:
    trace.logits = *trace.paragraph_logits;
    break;
  case Variant::Vtqa: {
    const Var branches[] = {*trace.paragraph_logits, *trace.visual_logits};
    trace.logits =
      config.late_fusion ? late_fuse(branches) : add(branches[0], branches[1]);
    break;
  }
  }
  return trace;
}

namespace {

Vector column(const Var &v) {
  return Eigen::Map<const Vector>(v.value().data(), v.value().size());
}

} // namespace

ForwardResult forward(const PreparedSample &sample, const Model &model) {
  Tape tape;
  const BoundParams bound(tape, model.params, false);
  const ForwardTrace trace = forward_on_tape(bound, model.config, sample);
  ForwardResult r;
  r.logits_fused = column(trace.logits);
  r.logits_final = model.config.uses_recommendation()
                     ? apply_credit(r.logits_fused, sample.recommendation)
                     : r.logits_fused;
  if (trace.paragraph_logits) {
    r.paragraph_logits = column(*trace.paragraph_logits);
    r.paragraph_alpha = column(*trace.paragraph_alpha);
  }
  if (trace.visual_logits) {
    r.visual_logits = column(*trace.visual_logits);
    r.visual_alpha = column(*trace.visual_alpha);
  }
  return r;
}

ForwardResult forward(const SampleRecord &sample, const Model &model) {
  return forward(prepare(sample, model.words, model.answers, model.config), model);
}

int predict(const PreparedSample &sample, const Model &model) {
  return static_cast<int>(argmax(forward(sample, model).logits_final));
}

// Checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'V', 'T', 'Q', 'A', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

json config_to_json(const ModelConfig &c) {
  const Widths &w = c.widths;
  return json{{"variant", to_string(c.variant)},
              {"early_fusion", c.early_fusion},
              {"late_fusion", c.late_fusion},
              {"answer_recommendation", c.answer_recommendation},
              {"property_fusion", c.property_fusion},
              {"share_embeddings", c.share_embeddings},
              {"widths",
               {{"d", w.d}, {"d_v", w.d_v}, {"d_q", w.d_q}, {"h_a", w.h_a},
                {"h_g", w.h_g}, {"d_emb", w.d_emb}}},
              {"credit", c.credit},
              {"seed", c.seed},
              {"vocab_size", c.vocab_size},
              {"answer_count", c.answer_count}};
}

ModelConfig config_from_json(const json &j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.early_fusion = j.at("early_fusion").get<bool>();
  c.late_fusion = j.at("late_fusion").get<bool>();
  c.answer_recommendation = j.at("answer_recommendation").get<bool>();
  c.property_fusion = j.at("property_fusion").get<bool>();
  c.share_embeddings = j.at("share_embeddings").get<bool>();
  const json &w = j.at("widths");
  c.widths = Widths{w.at("d").get<int>(),   w.at("d_v").get<int>(),
                    w.at("d_q").get<int>(), w.at("h_a").get<int>(),
                    w.at("h_g").get<int>(), w.at("d_emb").get<int>()};
  c.credit = j.at("credit").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.answer_count = j.at("answer_count").get<int>();
  return c;
}

std::string describe_mismatch(const ModelParams &params,
                              const std::map<std::string, std::pair<Index, Index>> &want) {
  std::vector<std::string> missing, unexpected, misshaped;
  for (const auto &[name, shape] : want) {
    if (!params.contains(name))
      missing.push_back(name);
    else if (params.at(name).rows() != shape.first ||
             params.at(name).cols() != shape.second)
      misshaped.push_back(name);
  }
  for (const auto &[name, t] : params)
    if (!want.count(name))
      unexpected.push_back(name);
  if (missing.empty() && unexpected.empty() && misshaped.empty())
    return {};
  std::ostringstream os;
  auto list = [&os](const char *label, const std::vector<std::string> &v) {
    if (v.empty())
      return;
    os << " " << label << ":";
    for (const auto &n : v)
      os << " " << n;
    os << ";";
  };
  os << "checkpoint does not match the model configuration;";
  list("missing tensors", missing);
  list("unexpected tensors", unexpected);
  list("wrong shapes", misshaped);
  return os.str();
}

} // namespace

void save_checkpoint(const Model &model, const std::filesystem::path &path) {
  json tensors = json::object();
  std::uint64_t offset = 0;
  for (const auto &[name, t] : model.params) {
    tensors[name] = {{"shape", {t.rows(), t.cols()}}, {"offset", offset}};
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(double);
  }
  const json header = {{"format_version", kFormatVersion},
                       {"config", config_to_json(model.config)},
                       {"vocabulary", model.words.tokens()},
                       {"answers", model.answers.answers()},
                       {"tensors", tensors}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 8);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char *>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  // std::map iteration matches the manifest's lexicographic order.
  for (const auto &[name, t] : model.params)
    out.write(reinterpret_cast<const char *>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out)
    throw CheckpointError("write failed for checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    throw CheckpointMissingError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointMissingError("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointCorruptError(path.string() + ": bad checkpoint magic");
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char *>(&len), sizeof len) ||
      len > file_size - 16)
    throw CheckpointCorruptError(path.string() + ": bad header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw CheckpointCorruptError(path.string() + ": truncated header");

  Model model;
  std::vector<std::tuple<std::string, Index, Index, std::uint64_t>> manifest;
  try {
    const json header = json::parse(text);
    if (header.at("format_version").get<int>() != kFormatVersion)
      throw CheckpointCorruptError(path.string() + ": unsupported format version");
    model.config = config_from_json(header.at("config"));
    const auto tokens = header.at("vocabulary").get<std::vector<std::string>>();
    model.words = Vocabulary::from_tokens(tokens);
    const auto answers = header.at("answers").get<std::vector<std::string>>();
    model.answers = AnswerVocabulary(answers);
    for (const auto &[name, entry] : header.at("tensors").items()) {
      const auto shape = entry.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1)
        throw CheckpointCorruptError(path.string() + ": bad shape for " + name);
      manifest.emplace_back(name, shape[0], shape[1],
                            entry.at("offset").get<std::uint64_t>());
    }
  } catch (const CheckpointError &) {
    throw;
  } catch (const std::exception &e) {
    throw CheckpointCorruptError(path.string() + ": malformed header (" +
                                 e.what() + ")");
  }

  const std::uint64_t data_start = 16 + len;
  std::uint64_t expected = 0;
  for (const auto &[name, rows, cols, offset] : manifest) {
    if (offset != expected)
      throw CheckpointCorruptError(path.string() + ": offset mismatch for " + name);
    expected += static_cast<std::uint64_t>(rows * cols) * sizeof(double);
  }
  if (file_size != data_start + expected)
    throw CheckpointCorruptError(path.string() + ": expected " +
                                 std::to_string(data_start + expected) +
                                 " bytes, found " + std::to_string(file_size));
  ModelParams params;
  for (const auto &[name, rows, cols, offset] : manifest) {
    Tensor t(rows, cols);
    if (!in.read(reinterpret_cast<char *>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw CheckpointCorruptError(path.string() + ": truncated tensor " + name);
    params.set(name, std::move(t));
  }
  model.params = std::move(params);

  if (model.words.size() != model.config.vocab_size ||
      model.answers.size() != model.config.answer_count)
    throw CheckpointCorruptError(path.string() +
                                 ": vocabulary sizes disagree with config");
  try {
    const std::string problem =
      describe_mismatch(model.params, parameter_shapes(model.config));
    if (!problem.empty())
      throw CheckpointCorruptError(path.string() + ": " + problem);
  } catch (const ConfigError &e) {
    throw CheckpointCorruptError(path.string() + ": invalid config (" +
                                 e.what() + ")");
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path &path,
                      const ModelConfig &expected) {
  Model model = load_checkpoint(path);
  const std::string problem =
    describe_mismatch(model.params, parameter_shapes(expected));
  if (!problem.empty())
    throw CheckpointMismatchError(path.string() + ": " + problem);
  return model;
}

} // namespace vtqa
