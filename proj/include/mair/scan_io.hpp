#pragma once

// Permutation export: JSON ({"h","w","spec","order"}) and an SVG rendering of
// the scan path as one polyline per direction over the cell grid, with stripe
// or window boundaries dashed.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mair/scan.hpp"

namespace mair {

inline nlohmann::json scan_spec_to_json(const ScanSpec& s) {
  return nlohmann::json{{"strategy", to_string(s.strategy)},
                        {"stripe_width", s.stripe_width},
                        {"shifted", s.shifted},
                        {"direction", s.direction}};
}

inline nlohmann::json permutation_to_json(const ScanSpec& spec, const Permutation& p) {
  return nlohmann::json{{"h", p.h}, {"w", p.w}, {"spec", scan_spec_to_json(spec)}, {"order", p.order}};
}

// Columns where a dashed stripe/window boundary should be drawn.
inline std::vector<int> boundary_columns(const ScanSpec& spec, int W) {
  std::vector<int> cols;
  if (spec.strategy == ScanStrategy::NSS || spec.strategy == ScanStrategy::LOCAL_WINDOW) {
    std::vector<int> widths;
    if (spec.strategy == ScanStrategy::NSS && spec.shifted)
      widths = shifted_stripe_bounds(W, spec.stripe_width).widths;
    else
      widths = unshifted_stripe_bounds(W, spec.stripe_width);
    int c = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      c += widths[i];
      cols.push_back(c);
    }
  }
  return cols;
}

inline std::string render_scan_svg(ScanSpec spec, int H, int W) {
  const int cell = 24, margin = 12;
  const int svg_w = W * cell + 2 * margin, svg_h = H * cell + 2 * margin;
  static const char* colors[4] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_w << "\" height=\"" << svg_h
     << "\" viewBox=\"0 0 " << svg_w << " " << svg_h << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // grid
  os << "  <g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (int x = 0; x <= W; ++x)
    os << "    <line x1=\"" << margin + x * cell << "\" y1=\"" << margin << "\" x2=\"" << margin + x * cell
       << "\" y2=\"" << margin + H * cell << "\"/>\n";
  for (int y = 0; y <= H; ++y)
    os << "    <line x1=\"" << margin << "\" y1=\"" << margin + y * cell << "\" x2=\"" << margin + W * cell
       << "\" y2=\"" << margin + y * cell << "\"/>\n";
  os << "  </g>\n";
  // stripe / window boundaries
  const auto cols = boundary_columns(spec, W);
  if (!cols.empty()) {
    os << "  <g stroke=\"#555555\" stroke-width=\"2\" stroke-dasharray=\"6,4\">\n";
    for (int c : cols)
      os << "    <line x1=\"" << margin + c * cell << "\" y1=\"" << margin << "\" x2=\"" << margin + c * cell
         << "\" y2=\"" << margin + H * cell << "\"/>\n";
    os << "  </g>\n";
  }
  // one polyline per direction
  for (int dir = 0; dir < 4; ++dir) {
    spec.direction = dir;
    const Permutation perm = build_permutation(spec, H, W);
    os << "  <polyline fill=\"none\" stroke=\"" << colors[dir] << "\" stroke-width=\""
       << (dir == 0 ? 2.0 : 1.0) << "\" opacity=\"" << (dir == 0 ? 0.9 : 0.4) << "\" points=\"";
    for (int t = 0; t < perm.length(); ++t) {
      const int r = perm.order[static_cast<std::size_t>(t)] / W;
      const int c = perm.order[static_cast<std::size_t>(t)] % W;
      os << margin + c * cell + cell / 2 << "," << margin + r * cell + cell / 2
         << (t + 1 < perm.length() ? " " : "");
    }
    os << "\"/>\n";
    // start marker
    const Permutation p0 = perm;
    const int r0 = p0.order[0] / W, c0 = p0.order[0] % W;
    os << "  <circle cx=\"" << margin + c0 * cell + cell / 2 << "\" cy=\"" << margin + r0 * cell + cell / 2
       << "\" r=\"3\" fill=\"" << colors[dir] << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace mair
