// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pholid/figures.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pholid/error.hpp"

namespace pholid {

namespace {

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// White to dark blue.
std::string Shade(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - 225 * v));
  const int g = static_cast<int>(std::lround(255 - 190 * v));
  const int b = static_cast<int>(std::lround(255 - 100 * v));
  return fmt::format("#{:02x}{:02x}{:02x}", r, g, b);
}

// Min-max scaled heatmap of a frames x bins matrix, time on x, bin 0 at the
// bottom. Rows of the drawing are capped at max_rows by averaging bins.
void Heatmap(std::string& s, const Matrix& m, double x0, double y0, double w, double h,
             Eigen::Index max_rows = 96) {
  const Eigen::Index frames = m.rows();
  const Eigen::Index bins = m.cols();
  if (frames == 0 || bins == 0) return;
  const Eigen::Index rows = std::min(bins, max_rows);
  const double lo = m.minCoeff();
  const double hi = m.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  const double cw = w / static_cast<double>(frames);
  const double ch = h / static_cast<double>(rows);
  s += "<g class=\"heatmap\">\n";
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index b0 = r * bins / rows;
    const Eigen::Index b1 = std::max(b0 + 1, (r + 1) * bins / rows);
    for (Eigen::Index f = 0; f < frames; ++f) {
      const double v = m.row(f).segment(b0, b1 - b0).mean();
      s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                       x0 + f * cw, y0 + h - (r + 1) * ch, cw + 0.05, ch + 0.05, Shade((v - lo) / span));
    }
  }
  s += "</g>\n";
}

}  // namespace

std::string RenderConfusionSvg(const ConfusionMatrix& m, const LabelMap& labels,
                               const std::string& title) {
  const std::size_t c = m.size();
  if (labels.size() != c) {
    Fail(ErrorCategory::kShape, fmt::format("heatmap: {} labels for a {}x{} matrix", labels.size(), c, c));
  }
  const auto norm = m.RowNormalized();
  const double cell = 48.0;
  const double left = 110.0, top = 60.0;
  const double width = left + cell * c + 30.0;
  const double height = top + cell * c + 90.0;
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      width, height);
  s += fmt::format("<text x=\"{:.1f}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                   width / 2, Escape(title));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double v = norm[i][j];
      const double x = left + j * cell, y = top + i * cell;
      s += fmt::format(
          "<rect class=\"cell\" data-row=\"{}\" data-col=\"{}\" data-value=\"{}\" data-count=\"{}\" "
          "x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\" stroke=\"#999\"/>\n",
          i, j, v, m.counts[i][j], x, y, cell, cell, Shade(v));
      s += fmt::format(
          "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" fill=\"{}\">{:.2f}</text>\n",
          x + cell / 2, y + cell / 2 + 4, v > 0.6 ? "white" : "black", v);
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    const std::string name = Escape(labels.Name(static_cast<int>(i)));
    s += fmt::format("<text class=\"row-label\" x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n",
                     left - 6, top + i * cell + cell / 2 + 4, name);
    const double cx = left + i * cell + cell / 2, cy = top + c * cell + 14;
    s += fmt::format(
        "<text class=\"col-label\" x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" "
        "transform=\"rotate(-45 {:.1f} {:.1f})\">{}</text>\n",
        cx, cy, cx, cy, name);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">predicted</text>\n",
                   left + cell * c / 2, height - 8);
  s += fmt::format(
      "<text x=\"14\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1f})\">true</text>\n",
      top + cell * c / 2, top + cell * c / 2);
  s += "</svg>\n";
  return s;
}

std::string RenderSegmentationSvg(const SegmentationFigure& fig) {
  const auto& v = fig.curve.values;
  const double width = 900, left = 60, right = 20, plot_w = width - left - right;
  const double top_y = 40, top_h = 180, gap = 50, bottom_h = 200;
  const double height = top_y + top_h + gap + bottom_h + 30;
  const std::size_t n_frames = v.size() + 1;
  auto fx = [&](double frame) { return left + plot_w * frame / static_cast<double>(n_frames); };
  auto fy = [&](double sim) { return top_y + top_h * (1.0 - (sim + 1.0) / 2.0); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      width, height);
  s += "<metadata>";
  if (fig.spectrogram) {
    s += Escape(fig.spectrogram->Describe());
  } else {
    s += "no audio supplied; bottom panel shows input features";
  }
  s += "</metadata>\n";
  s += fmt::format("<text x=\"{:.1f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}: adjacent-frame similarity and boundaries (threshold {})</text>\n",
                   width / 2, Escape(fig.utterance_id), fig.boundaries.threshold);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left,
                   top_y, plot_w, top_h);
  for (double tick : {-1.0, 0.0, 1.0}) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 6,
                     fy(tick) + 4, tick);
  }
  s += fmt::format(
      "<line class=\"threshold\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#c33\"/>\n",
      left, fy(fig.boundaries.threshold), left + plot_w, fy(fig.boundaries.threshold));
  // Curve value j sits between frames j and j+1.
  s += "<polyline class=\"curve\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
  for (std::size_t j = 0; j < v.size(); ++j) {
    s += fmt::format("{:.2f},{:.2f} ", fx(j + 1.0), fy(std::clamp(v[j], -1.0, 1.0)));
  }
  s += "\"/>\n";
  if (v.size() == 1) {
    s += fmt::format("<circle class=\"curve-point\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"#1f4e9c\"/>\n",
                     fx(1.0), fy(std::clamp(v[0], -1.0, 1.0)));
  }
  const double bottom_y = top_y + top_h + gap;
  for (std::size_t b : fig.boundaries.boundaries) {
    s += fmt::format(
        "<line class=\"boundary\" data-index=\"{}\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
        "stroke=\"#222\" stroke-dasharray=\"4,3\"/>\n",
        b, fx(b + 1.0), top_y, fx(b + 1.0), bottom_y + bottom_h);
  }

  if (fig.spectrogram) {
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">spectrogram (log magnitude)</text>\n",
                     width / 2, bottom_y - 8);
    Heatmap(s, fig.spectrogram->log_magnitude, left, bottom_y, plot_w, bottom_h);
  } else if (fig.features) {
    s += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">input features (learned representations, not a spectrum)</text>\n",
        width / 2, bottom_y - 8);
    Heatmap(s, *fig.features, left, bottom_y, plot_w, bottom_h);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">frame</text>\n", width / 2,
                   height - 8);
  s += "</svg>\n";
  return s;
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) Fail(ErrorCategory::kIo, fmt::format("cannot write {}", path.string()));
  f << text;
  if (!f) Fail(ErrorCategory::kIo, fmt::format("short write to {}", path.string()));
}

}  // namespace pholid
