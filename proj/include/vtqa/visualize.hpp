// SPDX-License-Identifier: Apache-2.0
/**
 * @file   visualize.hpp
 * @brief  Sentence-attention rendering as a text table and as SVG bars.
 */
#ifndef VTQA_VISUALIZE_HPP
#define VTQA_VISUALIZE_HPP

#include <vtqa/data.hpp>
#include <vtqa/model.hpp>

#include <string>
#include <vector>

namespace vtqa {

struct AttentionReport {
  std::string id;
  std::string question;
  /// Paragraph sentences, or property sentences for the VQA-only variant.
  std::vector<std::string> rows;
  std::vector<double> alpha;
  std::string predicted;
  std::string gold;
  int clue_index = -1;
};

AttentionReport attention_report(const SampleRecord &sample, const Model &model);

/// Weights in units of 1e-4, rounded by largest remainder so the units
/// add up to round(1e4 * sum(alpha)).
std::vector<long> rounded_ten_thousandths(const std::vector<double> &alpha);

/// One line per row with its weight to four decimals, then question and
/// answers.
std::string render_text(const AttentionReport &report);

/// One horizontal <rect class="bar"> per row with width proportional to
/// its weight, the row text as a label and a caption block.
std::string render_svg(const AttentionReport &report);

std::string xml_escape(const std::string &s);

} // namespace vtqa

#endif // VTQA_VISUALIZE_HPP
