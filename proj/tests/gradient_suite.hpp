// SPDX-License-Identifier: Apache-2.0
// Random gradient-check instances for every differentiable op.
#ifndef VTQA_GRADIENT_SUITE_HPP
#define VTQA_GRADIENT_SUITE_HPP

#include "test_support.hpp"

#include <vtqa/decision_fusion.hpp>
#include <vtqa/early_fusion.hpp>
#include <vtqa/model.hpp>
#include <vtqa/text_encoders.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vtqa::testing {

struct GradCase {
  ScalarFn f;
  Tensor x;
};

struct OpCase {
  std::string name;
  std::function<GradCase(std::mt19937_64 &)> make;
};

/// Each case fixes every operand except `x` as a constant drawn from rng.
inline std::vector<OpCase> op_cases() {
  using R = std::mt19937_64;
  // Constants are captured by value; the per-case rng state seeds the
  // output weighting so analytic and numeric passes see identical f.
  auto weighted = [](std::uint64_t seed) {
    return [seed](const Var &y) {
      R rng(seed);
      return weighted_sum(y, rng);
    };
  };
  std::vector<OpCase> cases;

  cases.push_back({"matmul(lhs)", [=](R &rng) {
    const Index m = dim(rng), k = dim(rng), n = dim(rng);
    Tensor b = uniform(k, n, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &a) { return w(matmul(a, t.constant(b))); },
                    uniform(m, k, rng)};
  }});
  cases.push_back({"matmul(rhs)", [=](R &rng) {
    const Index m = dim(rng), k = dim(rng), n = dim(rng);
    Tensor a = uniform(m, k, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &b) { return w(matmul(t.constant(a), b)); },
                    uniform(k, n, rng)};
  }});
  cases.push_back({"add", [=](R &rng) {
    const Index m = dim(rng), n = dim(rng);
    Tensor b = uniform(m, n, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &a) { return w(add(a, t.constant(b))); },
                    uniform(m, n, rng)};
  }});
  cases.push_back({"sub", [=](R &rng) {
    const Index m = dim(rng), n = dim(rng);
    Tensor a = uniform(m, n, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &b) { return w(sub(t.constant(a), b)); },
                    uniform(m, n, rng)};
  }});
  cases.push_back({"mul", [=](R &rng) {
    const Index m = dim(rng), n = dim(rng);
    Tensor b = uniform(m, n, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &a) { return w(mul(a, t.constant(b))); },
                    uniform(m, n, rng)};
  }});
  cases.push_back({"mul(self)", [=](R &rng) {
    const Index m = dim(rng), n = dim(rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(mul(a, a)); },
                    uniform(m, n, rng)};
  }});
  cases.push_back({"scale", [=](R &rng) {
    const double k = std::uniform_real_distribution<double>(-2, 2)(rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(scale(a, k)); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"transpose", [=](R &rng) {
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(transpose(a)); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"concat_cols", [=](R &rng) {
    const Index m = dim(rng), p = dim(rng), q = dim(rng);
    Tensor b = uniform(m, q, rng);
    const bool left = std::bernoulli_distribution(0.5)(rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &a) {
                      return left ? w(concat_cols(a, t.constant(b)))
                                  : w(concat_cols(t.constant(b), a));
                    },
                    uniform(m, p, rng)};
  }});
  cases.push_back({"concat_rows", [=](R &rng) {
    const Index n = dim(rng);
    Tensor b = uniform(dim(rng), n, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &a) {
                      const Var parts[] = {t.constant(b), a, a};
                      return w(concat_rows(parts));
                    },
                    uniform(dim(rng), n, rng)};
  }});
  cases.push_back({"slice_rows", [=](R &rng) {
    const Index m = dim(rng, 2, 5), n = dim(rng);
    const Index start = std::uniform_int_distribution<Index>(0, m - 1)(rng);
    const Index count = std::uniform_int_distribution<Index>(1, m - start)(rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(slice_rows(a, start, count)); },
                    uniform(m, n, rng)};
  }});
  cases.push_back({"gather_rows", [=](R &rng) {
    const Index m = dim(rng, 2, 5), n = dim(rng);
    std::vector<int> rows;
    for (Index i = 0, k = dim(rng); i < k; ++i)
      rows.push_back(static_cast<int>(std::uniform_int_distribution<Index>(0, m - 1)(rng)));
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(gather_rows(a, rows)); },
                    uniform(m, n, rng)};
  }});
  cases.push_back({"relu", [=](R &rng) {
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(relu(a)); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"sigmoid", [=](R &rng) {
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(sigmoid(a)); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"tanh", [=](R &rng) {
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(vtqa::tanh(a)); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"softmax_rows", [=](R &rng) {
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(softmax_rows(a)); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"sum", [=](R &rng) {
    return GradCase{[](Tape &, const Var &a) { return sum(a); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  cases.push_back({"mean", [=](R &rng) {
    auto w = weighted(rng());
    return GradCase{[=](Tape &, const Var &a) { return w(mean(mul(a, a))); },
                    uniform(dim(rng), dim(rng), rng)};
  }});
  auto list_case = [=](int kind) {
    return [=](R &rng) {
      const Index m = dim(rng), n = dim(rng);
      std::vector<Tensor> others;
      for (Index i = 0, k = dim(rng, 1, 3); i < k; ++i)
        others.push_back(uniform(m, n, rng));
      auto w = weighted(rng());
      return GradCase{[=](Tape &t, const Var &a) {
                        std::vector<Var> xs{a};
                        for (const auto &o : others)
                          xs.push_back(t.constant(o));
                        if (kind == 0)
                          return w(max_over_list(xs));
                        if (kind == 1)
                          return w(mean_over_list(xs));
                        return w(sum_over_list(xs));
                      },
                      uniform(m, n, rng)};
    };
  };
  cases.push_back({"max_over_list", list_case(0)});
  cases.push_back({"mean_over_list", list_case(1)});
  cases.push_back({"sum_over_list", list_case(2)});
  cases.push_back({"late_fuse", [=](R &rng) {
    const Index n = dim(rng, 2, 5);
    Tensor other = uniform(n, 1, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &a) {
                      const Var xs[] = {a, t.constant(other)};
                      return w(late_fuse(xs));
                    },
                    uniform(n, 1, rng)};
  }});
  cases.push_back({"cross_entropy", [=](R &rng) {
    const Index n = dim(rng, 2, 5);
    const Index target = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    return GradCase{[=](Tape &, const Var &z) { return cross_entropy(z, target); },
                    uniform(n, 1, rng)};
  }});
  // gru_step with respect to the hidden state, the input and each weight.
  for (int which = 0; which < 11; ++which) {
    static const char *names[] = {"h", "x", "w_z", "u_z", "b_z", "w_r",
                                  "u_r", "b_r", "w_h", "u_h", "b_h"};
    cases.push_back({std::string("gru_step(") + names[which] + ")", [=](R &rng) {
      const Index dh = dim(rng), din = dim(rng);
      std::vector<Tensor> parts = {uniform(dh, 1, rng), uniform(din, 1, rng)};
      for (int g = 0; g < 3; ++g) {
        parts.push_back(uniform(dh, din, rng));
        parts.push_back(uniform(dh, dh, rng));
        parts.push_back(uniform(dh, 1, rng));
      }
      Tensor x = parts[static_cast<std::size_t>(which)];
      auto w = weighted(rng());
      return GradCase{[=](Tape &t, const Var &probe) {
                        std::vector<Var> v;
                        for (std::size_t i = 0; i < parts.size(); ++i)
                          v.push_back(i == static_cast<std::size_t>(which)
                                        ? probe
                                        : t.constant(parts[i]));
                        GruVars p{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
                        return w(gru_step(v[0], v[1], p));
                      },
                      x};
    }});
  }
  cases.push_back({"similarity(w_s)", [=](R &rng) {
    const Index o = dim(rng), k = dim(rng), d = dim(rng);
    Tensor v = uniform(o, d, rng), p = uniform(k, d, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &ws) {
                      return w(similarity(t.constant(v), t.constant(p), ws));
                    },
                    uniform(3 * d, 1, rng)};
  }});
  cases.push_back({"similarity(P)", [=](R &rng) {
    const Index o = dim(rng), k = dim(rng), d = dim(rng);
    Tensor v = uniform(o, d, rng), ws = uniform(3 * d, 1, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &p) {
                      return w(similarity(t.constant(v), p, t.constant(ws)));
                    },
                    uniform(k, d, rng)};
  }});
  cases.push_back({"attend_paragraph_over_objects", [=](R &rng) {
    const Index o = dim(rng), k = dim(rng), d = dim(rng);
    Tensor v = uniform(o, d, rng);
    auto w = weighted(rng());
    return GradCase{[=](Tape &t, const Var &s) {
                      return w(attend_paragraph_over_objects(s, t.constant(v)));
                    },
                    uniform(o, k, rng)};
  }});
  return cases;
}

struct NamedCase {
  std::string name;
  GradCase grad;
};

/// Adds U[-amount, amount] noise to every parameter; PAD rows stay zero.
inline Model jittered(Model m, std::uint64_t seed, double amount = 0.5) {
  std::mt19937_64 rng(seed);
  for (auto &[name, t] : m.params) {
    t += uniform(t.rows(), t.cols(), rng, -amount, amount);
    if (is_embedding(name))
      t.row(Vocabulary::kPad).setZero();
  }
  return m;
}

/// Mean cross-entropy of `batch` as a function of each parameter tensor.
inline std::vector<NamedCase> model_cases(const Model &model,
                                          const std::vector<PreparedSample> &batch) {
  auto shared = std::make_shared<const Model>(model);
  auto samples = std::make_shared<const std::vector<PreparedSample>>(batch);
  std::vector<NamedCase> out;
  for (const auto &[name, value] : model.params) {
    const std::string key = name;
    out.push_back({key, GradCase{[shared, samples, key](Tape &t, const Var &probe) {
                                   BoundParams bound(t, shared->params, false);
                                   bound.replace(key, probe);
                                   std::vector<Var> losses;
                                   for (const auto &s : *samples)
                                     losses.push_back(cross_entropy(
                                       forward_on_tape(bound, shared->config, s).logits,
                                       s.target));
                                   return scale(sum_over_list(losses),
                                                1.0 / static_cast<double>(losses.size()));
                                 },
                                 value}});
  }
  return out;
}

} // namespace vtqa::testing

#endif // VTQA_GRADIENT_SUITE_HPP
