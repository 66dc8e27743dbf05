// SPDX-License-Identifier: Apache-2.0
/**
 * @file   text_encoders.cpp
 * @brief  Tokenizer, embedding file loader and the fused GRU step.
 */
#include <vtqa/text_encoders.hpp>

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

namespace vtqa {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

int Vocabulary::add(const std::string &token) {
  auto it = index_.find(token);
  if (it != index_.end())
    return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>")
    throw ArgumentError("vocabulary must start with <pad> and <unk>");
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != static_cast<int>(i))
      throw ArgumentError("duplicate vocabulary token: " + tokens[i]);
  }
  return v;
}

std::vector<std::string> split_words(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text)
    cleaned.push_back(std::ispunct(c) ? ' ' : static_cast<char>(std::tolower(c)));
  std::vector<std::string> words;
  std::istringstream is(cleaned);
  for (std::string w; is >> w;)
    words.push_back(std::move(w));
  return words;
}

TokenIds tokenize(std::string_view text, const Vocabulary &vocab) {
  TokenIds ids;
  for (const auto &w : split_words(text))
    ids.push_back(vocab.index(w));
  if (ids.empty())
    ids.push_back(Vocabulary::kUnk);
  return ids;
}

std::string make_property_sentence(const std::string &name,
                                   std::span<const std::string> attributes) {
  std::string s = name + " is";
  for (const auto &a : attributes)
    s += " " + a;
  return s;
}

int load_embedding_file(const std::filesystem::path &path,
                        const Vocabulary &vocab, Tensor &table) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open embedding file " + path.string());
  int replaced = 0;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::istringstream is(line);
    std::string token;
    if (!(is >> token))
      continue;
    std::vector<double> values;
    for (double v; is >> v;)
      values.push_back(v);
    if (static_cast<Index>(values.size()) != table.cols())
      throw DimensionError(path.string() + ":" + std::to_string(line_no) +
                           ": expected " + std::to_string(table.cols()) +
                           " values, got " + std::to_string(values.size()));
    const int id = vocab.index(token);
    if (id == Vocabulary::kPad || (id == Vocabulary::kUnk && token != "<unk>"))
      continue;
    table.row(id) = Eigen::Map<const Eigen::RowVectorXd>(
      values.data(), static_cast<Index>(values.size()));
    ++replaced;
  }
  return replaced;
}

GruParams GruParams::zeros(Index hidden, Index input) {
  GruParams p;
  for (Tensor *w : {&p.w_z, &p.w_r, &p.w_h})
    *w = Tensor::Zero(hidden, input);
  for (Tensor *u : {&p.u_z, &p.u_r, &p.u_h})
    *u = Tensor::Zero(hidden, hidden);
  for (Tensor *b : {&p.b_z, &p.b_r, &p.b_h})
    *b = Tensor::Zero(hidden, 1);
  return p;
}

GruVars bind(Tape &tape, const GruParams &p, bool trainable) {
  auto put = [&](const Tensor &t) {
    return trainable ? tape.variable(t) : tape.constant(t);
  };
  return GruVars{put(p.w_z), put(p.u_z), put(p.b_z), put(p.w_r), put(p.u_r),
                 put(p.b_r), put(p.w_h), put(p.u_h), put(p.b_h)};
}

namespace {

Vector as_column(const Tensor &t) {
  return Eigen::Map<const Vector>(t.data(), t.size());
}

bool is_vector_of(const Tensor &t, Index n) {
  return (t.cols() == 1 || t.rows() == 1) && t.size() == n;
}

} // namespace

Var gru_step(const Var &h, const Var &x, const GruVars &p) {
  const Index dh = p.hidden(), din = p.input();
  if (!is_vector_of(h.value(), dh))
    throw DimensionError("gru_step: hidden state " + shape_string(h.value()) +
                         " does not match " + shape_string(p.u_z.value()));
  if (!is_vector_of(x.value(), din))
    throw DimensionError("gru_step: input " + shape_string(x.value()) +
                         " does not match " + shape_string(p.w_z.value()));
  const Vector hv = as_column(h.value());
  const Vector xv = as_column(x.value());

  auto sig = [](const Vector &a) -> Vector {
    return (1.0 + (-a.array()).exp()).inverse().matrix();
  };
  const Vector z = sig(p.w_z.value() * xv + p.u_z.value() * hv + p.b_z.value());
  const Vector r = sig(p.w_r.value() * xv + p.u_r.value() * hv + p.b_r.value());
  const Vector rh = r.cwiseProduct(hv);
  const Vector n =
    (p.w_h.value() * xv + p.u_h.value() * rh + p.b_h.value()).array().tanh();
  Tensor out = (hv + z.cwiseProduct(n - hv));

  Tape &t = h.tape();
  const std::size_t ih = h.id(), ix = x.id();
  const std::array<std::size_t, 9> ip = {
    p.w_z.id(), p.u_z.id(), p.b_z.id(), p.w_r.id(), p.u_r.id(),
    p.b_r.id(), p.w_h.id(), p.u_h.id(), p.b_h.id()};
  bool needs = t.requires_grad(ih) || t.requires_grad(ix);
  for (auto id : ip)
    needs = needs || t.requires_grad(id);

  const Index h_rows = h.rows(), h_cols = h.cols();
  const Index x_rows = x.rows(), x_cols = x.cols();
  return t.record(
    std::move(out), needs,
    [=](Tape &t, const Tensor &g_out) {
      const Vector g = as_column(g_out);
      const Vector dz = g.cwiseProduct(n - hv);
      const Vector dn = g.cwiseProduct(z);
      Vector dh = g.cwiseProduct(Vector::Ones(g.size()) - z);
      Vector dx = Vector::Zero(xv.size());

      const Vector da_h =
        dn.cwiseProduct((1.0 - n.array().square()).matrix());
      const Tensor &u_h = t.value(ip[7]);
      const Vector drh = u_h.transpose() * da_h;
      dx += t.value(ip[6]).transpose() * da_h;
      dh += drh.cwiseProduct(r);
      const Vector dr = drh.cwiseProduct(hv);
      const Vector da_r = dr.cwiseProduct(r.cwiseProduct(
        (1.0 - r.array()).matrix()));
      dx += t.value(ip[3]).transpose() * da_r;
      dh += t.value(ip[4]).transpose() * da_r;
      const Vector da_z = dz.cwiseProduct(z.cwiseProduct(
        (1.0 - z.array()).matrix()));
      dx += t.value(ip[0]).transpose() * da_z;
      dh += t.value(ip[1]).transpose() * da_z;

      t.accumulate(ip[0], da_z * xv.transpose());
      t.accumulate(ip[1], da_z * hv.transpose());
      t.accumulate(ip[2], da_z);
      t.accumulate(ip[3], da_r * xv.transpose());
      t.accumulate(ip[4], da_r * hv.transpose());
      t.accumulate(ip[5], da_r);
      t.accumulate(ip[6], da_h * xv.transpose());
      t.accumulate(ip[7], da_h * rh.transpose());
      t.accumulate(ip[8], da_h);
      if (t.requires_grad(ih))
        t.accumulate(ih, Eigen::Map<const Tensor>(dh.data(), h_rows, h_cols));
      if (t.requires_grad(ix))
        t.accumulate(ix, Eigen::Map<const Tensor>(dx.data(), x_rows, x_cols));
    });
}

Var encode_sentence(std::span<const int> tokens, const Var &embeddings,
                    const GruVars &gru) {
  if (tokens.empty())
    throw ArgumentError("encode_sentence: empty token list");
  if (embeddings.cols() != gru.input())
    throw DimensionError("encode_sentence: embeddings " +
                         shape_string(embeddings.value()) +
                         " do not match GRU input " +
                         shape_string(gru.w_z.value()));
  Tape &t = embeddings.tape();
  const Var x = gather_rows(embeddings, tokens);
  Var h = t.constant(Tensor::Zero(gru.hidden(), 1));
  for (Index i = 0; i < x.rows(); ++i)
    h = gru_step(h, x.rows() == 1 ? x : slice_rows(x, i, 1), gru);
  return h;
}

Var encode_paragraph(std::span<const TokenIds> sentences,
                     const Var &embeddings, const GruVars &gru) {
  if (sentences.empty())
    throw ArgumentError("encode_paragraph: needs at least one sentence");
  std::vector<Var> rows;
  rows.reserve(sentences.size());
  for (const auto &s : sentences)
    rows.push_back(transpose(encode_sentence(s, embeddings, gru)));
  return rows.size() == 1 ? rows.front() : concat_rows(rows);
}

Var encode_properties(std::span<const TokenIds> property_sentences,
                      Index object_count, const Var &embeddings,
                      const GruVars &gru) {
  if (static_cast<Index>(property_sentences.size()) != object_count)
    throw AlignmentError("encode_properties: " +
                         std::to_string(property_sentences.size()) +
                         " property sentences for " +
                         std::to_string(object_count) + " objects");
  return encode_paragraph(property_sentences, embeddings, gru);
}

Var encode_question(std::span<const int> tokens, const Var &embeddings,
                    const GruVars &question_gru) {
  return encode_sentence(tokens, embeddings, question_gru);
}

} // namespace vtqa
