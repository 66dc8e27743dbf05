// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.cpp
 * @brief  Optimizer, training loop, evaluation and ablation.
 */
#include <vtqa/training.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace vtqa {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (epochs < 1)
    throw ConfigError("epochs must be >= 1");
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  if (eval_every < 1)
    throw ConfigError("eval_every must be >= 1");
  if (min_answer_frequency < 1)
    throw ConfigError("min_answer_frequency must be >= 1");
}

void adamax_step(ModelParams &params, const std::map<std::string, Tensor> &grads,
                 OptimizerState &state, const TrainConfig &config) {
  for (const auto &[name, g] : grads) {
    const Tensor &p = params.at(name);
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw DimensionError("adamax_step: gradient " + shape_string(g) +
                           " for parameter " + name + " " + shape_string(p));
  }
  ++state.step;
  const double correction =
    1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double step_size = config.learning_rate / correction;
  for (const auto &[name, g] : grads) {
    Tensor &p = params.at(name);
    auto [mit, fresh_m] = state.m.try_emplace(name, Tensor::Zero(p.rows(), p.cols()));
    auto [uit, fresh_u] = state.u.try_emplace(name, Tensor::Zero(p.rows(), p.cols()));
    Tensor &m = mit->second;
    Tensor &u = uit->second;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    u = (config.beta2 * u).cwiseMax(g.cwiseAbs());
    for (Index i = 0; i < p.size(); ++i) {
      const double ui = u.data()[i];
      if (ui != 0.0)
        p.data()[i] -= step_size * m.data()[i] / ui;
    }
    if (is_embedding(name))
      p.row(Vocabulary::kPad).setZero();
  }
}

namespace {

void add_sentence(Vocabulary &v, const std::string &text) {
  for (const auto &w : split_words(text))
    v.add(w);
}

std::vector<PreparedSample> prepare_all(const Dataset &data, const Model &m) {
  std::vector<PreparedSample> out;
  out.reserve(data.size());
  for (const auto &r : data)
    out.push_back(prepare(r, m.words, m.answers, m.config));
  return out;
}

int thread_cap() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char *env = std::getenv("VTQA_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1)
      n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return static_cast<int>(n);
}

} // namespace

Vocabulary build_word_vocab(const Dataset &train) {
  Vocabulary v;
  for (const auto &r : train) {
    add_sentence(v, r.question);
    for (const auto &s : r.paragraph)
      add_sentence(v, s);
    for (std::size_t i = 0; i < r.object_names.size(); ++i)
      add_sentence(v, make_property_sentence(r.object_names[i],
                                             r.object_attributes[i]));
  }
  return v;
}

double batch_loss(const Model &model, std::span<const PreparedSample *const> batch,
                  std::map<std::string, Tensor> *grads) {
  if (batch.empty())
    throw ArgumentError("batch_loss: empty batch");
  Tape tape;
  const BoundParams bound(tape, model.params, grads != nullptr);
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (const PreparedSample *s : batch) {
    const ForwardTrace trace = forward_on_tape(bound, model.config, *s);
    losses.push_back(cross_entropy(trace.logits, s->target));
  }
  const Var total =
    scale(sum_over_list(losses), 1.0 / static_cast<double>(batch.size()));
  if (grads) {
    tape.backward(total);
    grads->clear();
    for (const auto &[name, v] : bound.vars())
      grads->emplace(name, tape.grad(v));
  }
  return total.value()(0, 0);
}

EvalResult evaluate(const Model &model, const std::vector<PreparedSample> &data) {
  EvalResult r;
  r.total = static_cast<int>(data.size());
  if (data.empty()) {
    r.empty = true;
    return r;
  }
  const int workers = std::min<int>(thread_cap(), r.total);
  std::vector<int> correct(static_cast<std::size_t>(workers), 0);
  auto run = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < data.size();
         i += static_cast<std::size_t>(workers)) {
      const PreparedSample &s = data[i];
      if (s.target >= 0 && predict(s, model) == s.target)
        ++correct[static_cast<std::size_t>(w)];
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(run, w);
    for (auto &t : pool)
      t.join();
  }
  r.correct = std::accumulate(correct.begin(), correct.end(), 0);
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

EvalResult evaluate(const Model &model, const Dataset &data) {
  return evaluate(model, prepare_all(data, model));
}

json non_paper_defaults(const TrainConfig &train) {
  return json{
    {"batch_size", train.batch_size},
    {"epochs", train.epochs},
    {"loss", "softmax cross-entropy on the fused logits"},
    {"answer_recommendation", "applied at inference only"},
    {"min_answer_frequency", train.min_answer_frequency},
    {"initialization", "uniform(+-1/sqrt(fan_in)), embeddings uniform(+-0.1)"},
    {"similarity", "trilinear w_s . [v; p; v * p]"},
    {"classifier", "single affine layer"}};
}

json Metrics::to_json(const ModelConfig &model, const TrainConfig &train) const {
  json epochs_json = json::array();
  for (const auto &e : epochs) {
    json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.val_accuracy >= 0.0)
      row["val_accuracy"] = e.val_accuracy;
    epochs_json.push_back(std::move(row));
  }
  json j = {{"non_paper_defaults", non_paper_defaults(train)},
            {"variant", to_string(model.variant)},
            {"early_fusion", model.early_fusion},
            {"late_fusion", model.uses_late_fusion()},
            {"answer_recommendation", model.uses_recommendation()},
            {"credit", model.credit},
            {"learning_rate", train.learning_rate},
            {"seed", train.seed},
            {"train_samples", train_samples},
            {"dropped_out_of_vocab", dropped_out_of_vocab},
            {"epochs", std::move(epochs_json)},
            {"best_epoch", best_epoch},
            {"best_val_accuracy", best_val_accuracy}};
  if (test_accuracy >= 0.0)
    j["test_accuracy"] = test_accuracy;
  return j;
}

namespace {

/// Trains once and keeps a best-epoch snapshot for each selector config.
/// Selectors may differ from the trained config only in inference-time
/// answer-recommendation settings.
std::vector<TrainResult> train_shared(const ModelConfig &model_config,
                                      const TrainConfig &config,
                                      const DatasetSplits &splits,
                                      const std::vector<ModelConfig> &selectors) {
  config.validate();
  if (splits.train.empty())
    throw ConfigError("training set is empty");

  Model model;
  model.words = build_word_vocab(splits.train);
  std::vector<std::string> answers;
  for (const auto &r : splits.train)
    answers.push_back(r.answer);
  model.answers = build_answer_vocab(answers, config.min_answer_frequency);
  model.config = model_config;
  model.config.vocab_size = model.words.size();
  model.config.answer_count = model.answers.size();
  model.config.validate();
  model.params = init_params(model.config);
  if (config.embedding_file) {
    const int n = load_embedding_file(*config.embedding_file, model.words,
                                      model.params.at("embedding"));
    if (config.log)
      config.log("loaded " + std::to_string(n) + " embedding rows");
  }

  Metrics base;
  std::vector<PreparedSample> train_set;
  for (auto &s : prepare_all(splits.train, model)) {
    if (s.target < 0)
      ++base.dropped_out_of_vocab;
    else
      train_set.push_back(std::move(s));
  }
  if (train_set.empty())
    throw ConfigError("no training sample has an in-vocabulary answer");
  base.train_samples = static_cast<int>(train_set.size());
  if (config.log && base.dropped_out_of_vocab > 0)
    config.log("dropped " + std::to_string(base.dropped_out_of_vocab) +
               " training samples with out-of-vocabulary answers");
  const std::vector<PreparedSample> val_set = prepare_all(splits.val, model);

  std::vector<Model> views(selectors.size(), model);
  for (std::size_t k = 0; k < selectors.size(); ++k) {
    views[k].config = selectors[k];
    views[k].config.vocab_size = model.config.vocab_size;
    views[k].config.answer_count = model.config.answer_count;
  }
  std::vector<Metrics> metrics(selectors.size(), base);
  std::vector<ModelParams> best(selectors.size(), model.params);
  std::vector<double> best_acc(selectors.size(), -1.0);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState state;
  std::map<std::string, Tensor> grads;
  std::vector<const PreparedSample *> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
        std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i)
        batch.push_back(&train_set[order[i]]);
      const double loss = batch_loss(model, batch, &grads);
      loss_sum += loss * static_cast<double>(batch.size());
      adamax_step(model.params, grads, state, config);
    }
    const double epoch_loss = loss_sum / static_cast<double>(train_set.size());
    const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;

    std::ostringstream line;
    line << "epoch " << epoch << " loss " << std::setprecision(6) << epoch_loss;
    for (std::size_t k = 0; k < selectors.size(); ++k) {
      EpochMetrics em{epoch, epoch_loss, -1.0};
      if (eval_now && !val_set.empty()) {
        views[k].params = model.params;
        em.val_accuracy = evaluate(views[k], val_set).accuracy;
        line << " val[" << k << "] " << em.val_accuracy;
        if (em.val_accuracy > best_acc[k]) {
          best_acc[k] = em.val_accuracy;
          best[k] = model.params;
          metrics[k].best_epoch = epoch;
          metrics[k].best_val_accuracy = em.val_accuracy;
        }
      }
      metrics[k].epochs.push_back(em);
    }
    if (config.log)
      config.log(line.str());
  }

  std::vector<TrainResult> out;
  for (std::size_t k = 0; k < selectors.size(); ++k) {
    Model m = views[k];
    if (val_set.empty()) {
      m.params = model.params;
      metrics[k].best_epoch = config.epochs;
    } else {
      m.params = best[k];
    }
    if (!splits.test.empty())
      metrics[k].test_accuracy = evaluate(m, splits.test).accuracy;
    out.push_back(TrainResult{std::move(m), metrics[k]});
  }
  return out;
}

ModelConfig training_key(ModelConfig c) {
  c.answer_recommendation = false;
  c.credit = 1.0;
  return c;
}

} // namespace

TrainResult train(const ModelConfig &model_config, const TrainConfig &config,
                  const DatasetSplits &splits) {
  return train_shared(model_config, config, splits, {model_config}).front();
}

double median(std::vector<double> values) {
  if (values.empty())
    return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double AblationTable::median(const std::string &variant) const {
  for (const auto &[name, m] : medians)
    if (name == variant)
      return m;
  throw ArgumentError("no ablation variant named " + variant);
}

void AblationTable::write_tsv(std::ostream &os) const {
  os << "variant\tseed\tval_accuracy\ttest_accuracy\n";
  os << std::fixed << std::setprecision(4);
  for (const auto &r : runs)
    os << r.variant << '\t' << r.seed << '\t' << r.val_accuracy << '\t'
       << r.test_accuracy << '\n';
  for (const auto &[name, m] : medians)
    os << name << "\tmedian\t-\t" << m << '\n';
  os.unsetf(std::ios::fixed);
}

json AblationTable::to_json(const TrainConfig &train) const {
  json rows = json::array();
  for (const auto &r : runs)
    rows.push_back({{"variant", r.variant},
                    {"seed", r.seed},
                    {"val_accuracy", r.val_accuracy},
                    {"test_accuracy", r.test_accuracy}});
  json med = json::object();
  for (const auto &[name, m] : medians)
    med[name] = m;
  return json{{"non_paper_defaults", non_paper_defaults(train)},
              {"runs", std::move(rows)},
              {"median_test_accuracy", std::move(med)}};
}

std::vector<AblationVariant> standard_ablation(const ModelConfig &base) {
  auto make = [&base](Variant v, bool lf, bool ar) {
    ModelConfig c = base;
    c.variant = v;
    c.early_fusion = true;
    c.late_fusion = lf;
    c.answer_recommendation = ar;
    return c;
  };
  return {{"VQA", make(Variant::VqaOnly, false, false)},
          {"VTQA+EF", make(Variant::Vtqa, false, false)},
          {"VTQA+EF+LF", make(Variant::Vtqa, true, false)},
          {"VTQA+EF+AR", make(Variant::Vtqa, false, true)},
          {"VTQA+EF+LF+AR", make(Variant::Vtqa, true, true)}};
}

AblationTable ablate(const std::vector<AblationVariant> &variants,
                     const TrainConfig &config, const DatasetSplits &splits,
                     int n_seeds) {
  if (variants.empty())
    throw ConfigError("ablate needs at least one variant");
  if (n_seeds < 1)
    throw ConfigError("ablate needs at least one seed");

  // Variants that share a training run.
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    bool placed = false;
    for (auto &g : groups) {
      if (training_key(variants[g.front()].config) ==
          training_key(variants[i].config)) {
        g.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed)
      groups.push_back({i});
  }

  std::vector<std::vector<AblationRow>> per_variant(variants.size());
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(s);
    TrainConfig tc = config;
    tc.seed = seed;
    for (const auto &g : groups) {
      std::vector<ModelConfig> selectors;
      for (auto i : g) {
        selectors.push_back(variants[i].config);
        selectors.back().seed = seed;
      }
      ModelConfig trained = training_key(selectors.front());
      const auto results = train_shared(trained, tc, splits, selectors);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const Metrics &m = results[k].metrics;
        per_variant[g[k]].push_back(AblationRow{variants[g[k]].name, seed,
                                                m.best_val_accuracy,
                                                std::max(0.0, m.test_accuracy)});
        if (config.log)
          config.log(variants[g[k]].name + " seed " + std::to_string(seed) +
                     " test " + std::to_string(m.test_accuracy));
      }
    }
  }

  AblationTable table;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    std::vector<double> accs;
    for (const auto &r : per_variant[i]) {
      table.runs.push_back(r);
      accs.push_back(r.test_accuracy);
    }
    table.medians.emplace_back(variants[i].name, vtqa::median(accs));
  }
  return table;
}

} // namespace vtqa
