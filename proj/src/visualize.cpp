// SPDX-License-Identifier: Apache-2.0
#include <vtqa/visualize.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace vtqa {

AttentionReport attention_report(const SampleRecord &sample, const Model &model) {
  const PreparedSample prepared =
    prepare(sample, model.words, model.answers, model.config);
  const ForwardResult out = forward(prepared, model);

  AttentionReport r;
  r.id = sample.id;
  r.question = sample.question;
  r.gold = sample.answer;
  r.predicted = model.answers.answer(static_cast<int>(argmax(out.logits_final)));
  const Vector *alpha = nullptr;
  if (out.paragraph_alpha) {
    r.rows = sample.paragraph;
    r.clue_index = sample.clue_index;
    alpha = &*out.paragraph_alpha;
  } else {
    for (std::size_t i = 0; i < sample.object_names.size(); ++i)
      r.rows.push_back(make_property_sentence(sample.object_names[i],
                                              sample.object_attributes[i]));
    alpha = &*out.visual_alpha;
  }
  r.alpha.assign(alpha->data(), alpha->data() + alpha->size());
  return r;
}

std::vector<long> rounded_ten_thousandths(const std::vector<double> &alpha) {
  std::vector<long> units(alpha.size());
  std::vector<double> rest(alpha.size());
  long total = 0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double scaled = alpha[i] * 1e4;
    units[i] = static_cast<long>(std::floor(scaled));
    rest[i] = scaled - static_cast<double>(units[i]);
    total += units[i];
  }
  double mass = 0;
  for (double a : alpha)
    mass += a;
  const long target = std::lround(mass * 1e4);
  std::vector<std::size_t> order(alpha.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rest[a] > rest[b]; });
  for (std::size_t k = 0; k < order.size() && total < target; ++k, ++total)
    ++units[order[k]];
  return units;
}

std::string render_text(const AttentionReport &report) {
  std::ostringstream os;
  os << "sample: " << report.id << '\n';
  const std::vector<long> units = rounded_ten_thousandths(report.alpha);
  for (std::size_t i = 0; i < report.rows.size(); ++i)
    os << units[i] / 10000 << '.' << std::setw(4) << std::setfill('0') << units[i] % 10000
       << std::setfill(' ') << '\t' << report.rows[i] << '\n';
  os << "question: " << report.question << '\n';
  os << "predicted: " << report.predicted << '\n';
  os << "gold: " << report.gold << '\n';
  return os.str();
}

std::string xml_escape(const std::string &s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    case '\'': out += "&apos;"; break;
    default: out.push_back(c);
    }
  }
  return out;
}

std::string render_svg(const AttentionReport &report) {
  constexpr int kBarMax = 300, kRowHeight = 24, kLeft = 10, kLabelX = 330;
  const int caption_y = 20 + static_cast<int>(report.rows.size()) * kRowHeight;
  const int height = caption_y + 70;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const int y = 10 + static_cast<int>(i) * kRowHeight;
    const double w = report.alpha[i] * kBarMax;
    os << "  <rect class=\"bar\" x=\"" << kLeft << "\" y=\"" << y
       << "\" width=\"" << std::fixed << std::setprecision(2) << w
       << "\" height=\"18\" fill=\"#3b6ea5\"/>\n";
    os << "  <text x=\"" << kLabelX << "\" y=\"" << y + 14 << "\">"
       << std::setprecision(4) << report.alpha[i] << "  "
       << xml_escape(report.rows[i]) << "</text>\n";
  }
  os << "  <g class=\"caption\">\n";
  os << "    <text x=\"" << kLeft << "\" y=\"" << caption_y + 16
     << "\">Q: " << xml_escape(report.question) << "</text>\n";
  os << "    <text x=\"" << kLeft << "\" y=\"" << caption_y + 34
     << "\">predicted: " << xml_escape(report.predicted) << "</text>\n";
  os << "    <text x=\"" << kLeft << "\" y=\"" << caption_y + 52
     << "\">gold: " << xml_escape(report.gold) << "</text>\n";
  os << "  </g>\n</svg>\n";
  return os.str();
}

} // namespace vtqa
