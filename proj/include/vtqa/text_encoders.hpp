// SPDX-License-Identifier: Apache-2.0
/**
 * @file   text_encoders.hpp
 * @brief  Word vocabulary, embeddings and GRU sentence encoders.
 */
#ifndef VTQA_TEXT_ENCODERS_HPP
#define VTQA_TEXT_ENCODERS_HPP

#include <vtqa/tensor.hpp>

#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vtqa {

/// Raised when per-object inputs do not line up with the object rows.
class AlignmentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

using TokenIds = std::vector<int>;

class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  /// Returns the index of `token`, assigning the next free one if new.
  int add(const std::string &token);
  /// Index of `token`, or kUnk.
  int index(std::string_view token) const;
  const std::string &token(int index) const { return tokens_.at(index); }
  bool contains(std::string_view token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string> &tokens() const { return tokens_; }

  static Vocabulary from_tokens(std::span<const std::string> tokens);

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Lowercases, turns punctuation into spaces and splits on whitespace.
std::vector<std::string> split_words(std::string_view text);

/// Token ids for `text`; unseen words map to UNK and empty text to [UNK].
TokenIds tokenize(std::string_view text, const Vocabulary &vocab);

/// "{name} is {attr1 attr2 ...}".
std::string make_property_sentence(const std::string &name,
                                   std::span<const std::string> attributes);

/// Overwrites rows of `table` from a "token v1 ... vN" text file. Returns
/// the number of rows replaced; PAD is never overwritten.
int load_embedding_file(const std::filesystem::path &path,
                        const Vocabulary &vocab, Tensor &table);

/// GRU weights: input weights d_h x d_in, recurrent d_h x d_h, biases d_h.
struct GruParams {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;

  static GruParams zeros(Index hidden, Index input);
  Index hidden() const { return u_z.rows(); }
  Index input() const { return w_z.cols(); }
};

/// GruParams bound to a tape.
struct GruVars {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_h, u_h, b_h;

  Index hidden() const { return u_z.rows(); }
  Index input() const { return w_z.cols(); }
};

GruVars bind(Tape &tape, const GruParams &p, bool trainable);

/// One GRU update (column vectors; x may also be a 1 x d_in row):
///   z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r)
///   n = tanh(W_h x + U_h (r * h) + b_h), h' = (1 - z) * h + z * n
Var gru_step(const Var &h, const Var &x, const GruVars &p);

/// Final hidden state after folding gru_step over the embedded tokens,
/// starting from zero. Output is d_h x 1.
Var encode_sentence(std::span<const int> tokens, const Var &embeddings,
                    const GruVars &gru);

/// One row per sentence: K x d_h.
Var encode_paragraph(std::span<const TokenIds> sentences,
                     const Var &embeddings, const GruVars &gru);

/// Property sentence encodings, one row per object (O x d_h).
Var encode_properties(std::span<const TokenIds> property_sentences,
                      Index object_count, const Var &embeddings,
                      const GruVars &gru);

/// Question vector, d_q x 1, from the question GRU.
Var encode_question(std::span<const int> tokens, const Var &embeddings,
                    const GruVars &question_gru);

} // namespace vtqa

#endif // VTQA_TEXT_ENCODERS_HPP
