#pragma once

// 2D→1D scan permutations: nested S-shaped stripes (with the shift-stripe
// variant), raster, full-row serpentine, windowed raster, and a generalized
// Hilbert traversal for arbitrary rectangles. Plus the continuity/locality
// metrics used to compare them.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mair {

enum class ScanStrategy { NSS, Z, S, LOCAL_WINDOW, HILBERT };

inline const char* to_string(ScanStrategy s) {
  switch (s) {
    case ScanStrategy::NSS: return "nss";
    case ScanStrategy::Z: return "z";
    case ScanStrategy::S: return "s";
    case ScanStrategy::LOCAL_WINDOW: return "local_window";
    case ScanStrategy::HILBERT: return "hilbert";
  }
  return "?";
}

inline ScanStrategy scan_strategy_from_string(const std::string& s) {
  if (s == "nss") return ScanStrategy::NSS;
  if (s == "z") return ScanStrategy::Z;
  if (s == "s") return ScanStrategy::S;
  if (s == "local_window" || s == "local") return ScanStrategy::LOCAL_WINDOW;
  if (s == "hilbert") return ScanStrategy::HILBERT;
  throw std::invalid_argument("unknown scan strategy '" + s + "'");
}

struct ScanSpec {
  ScanStrategy strategy = ScanStrategy::NSS;
  int stripe_width = 4;  // stripe width for NSS, window side for LOCAL_WINDOW
  bool shifted = false;  // shift-stripe; only meaningful for NSS
  int direction = 0;     // 0..3

  void validate() const {
    if (stripe_width < 1) throw std::invalid_argument("scan spec: stripe width must be >= 1");
    if (direction < 0 || direction > 3)
      throw std::invalid_argument("scan spec: direction must be in 0..3, got " + std::to_string(direction));
  }
};

// order[t] = row-major cell index visited at sequence step t.
struct Permutation {
  std::vector<int> order;
  int h = 0;
  int w = 0;

  int length() const { return static_cast<int>(order.size()); }

  std::vector<int> inverse() const {
    std::vector<int> inv(order.size());
    for (int t = 0; t < length(); ++t) inv[static_cast<std::size_t>(order[t])] = t;
    return inv;
  }

  bool is_bijection() const {
    if (static_cast<long long>(order.size()) != static_cast<long long>(h) * w) return false;
    std::vector<char> seen(order.size(), 0);
    for (int v : order) {
      if (v < 0 || v >= length() || seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = 1;
    }
    return true;
  }
};

struct StripeBounds {
  std::vector<int> widths;
  bool fell_back = false;  // set when W < w_s forced the unshifted layout
};

// Shifted layout: first stripe w_s/2, interior stripes w_s, last the remainder.
inline StripeBounds shifted_stripe_bounds(int W, int ws) {
  if (W < 1 || ws < 1) throw std::invalid_argument("stripe bounds: W and stripe width must be >= 1");
  if (ws % 2 != 0)
    throw std::invalid_argument("stripe bounds: shift requires even stripe width, got " + std::to_string(ws));
  StripeBounds out;
  if (W < ws) {  // degenerate: fall back to the single unshifted stripe
    out.widths = {W};
    out.fell_back = true;
    return out;
  }
  out.widths.push_back(ws / 2);
  int remaining = W - ws / 2;
  while (remaining > ws) {
    out.widths.push_back(ws);
    remaining -= ws;
  }
  out.widths.push_back(remaining);
  return out;
}

inline std::vector<int> unshifted_stripe_bounds(int W, int ws) {
  std::vector<int> widths;
  int remaining = W;
  while (remaining > 0) {
    const int take = std::min(ws, remaining);
    widths.push_back(take);
    remaining -= take;
  }
  return widths;
}

namespace detail {

// Serpentine walk of one vertical stripe [c0, c0+width) over all rows.
// Rows run top→bottom when top_down, else bottom→top; the first row segment
// starts at the column nearest `entry_col` and each following segment flips
// horizontal direction.
inline void walk_stripe(std::vector<int>& order, int W, int H, int c0, int width, bool top_down,
                        int entry_col) {
  const int c1 = c0 + width - 1;
  bool left_to_right = std::abs(entry_col - c0) <= std::abs(entry_col - c1);
  for (int i = 0; i < H; ++i) {
    const int row = top_down ? i : H - 1 - i;
    if (left_to_right)
      for (int c = c0; c <= c1; ++c) order.push_back(row * W + c);
    else
      for (int c = c1; c >= c0; --c) order.push_back(row * W + c);
    left_to_right = !left_to_right;
  }
}

inline std::vector<int> build_nss_order(int H, int W, const std::vector<int>& widths) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(H) * W);
  int c0 = 0;
  int entry_col = 0;  // first stripe starts at the top-left cell
  for (std::size_t s = 0; s < widths.size(); ++s) {
    const bool top_down = (s % 2 == 0);
    walk_stripe(order, W, H, c0, widths[s], top_down, entry_col);
    entry_col = order.back() % W;  // next stripe enters nearest this exit column
    c0 += widths[s];
  }
  return order;
}

inline std::vector<int> build_z_order(int H, int W) {
  std::vector<int> order(static_cast<std::size_t>(H) * W);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  return order;
}

inline std::vector<int> build_local_window_order(int H, int W, int side) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(H) * W);
  for (int wy = 0; wy < H; wy += side)
    for (int wx = 0; wx < W; wx += side) {
      const int ye = std::min(H, wy + side), xe = std::min(W, wx + side);
      for (int y = wy; y < ye; ++y)
        for (int x = wx; x < xe; ++x) order.push_back(y * W + x);
    }
  return order;
}

// Generalized Hilbert traversal for arbitrary rectangles; recursion splits
// the rectangle keeping even step counts wherever possible so consecutive
// cells stay 4-adjacent on even-sided and power-of-two grids.
inline int sgn(int v) { return (v > 0) - (v < 0); }

inline void gilbert2d(std::vector<int>& order, int W, int x, int y, int ax, int ay, int bx, int by) {
  const int w = std::abs(ax + ay);
  const int h = std::abs(bx + by);
  const int dax = sgn(ax), day = sgn(ay);
  const int dbx = sgn(bx), dby = sgn(by);

  if (h == 1) {
    for (int i = 0; i < w; ++i) {
      order.push_back(y * W + x);
      x += dax;
      y += day;
    }
    return;
  }
  if (w == 1) {
    for (int i = 0; i < h; ++i) {
      order.push_back(y * W + x);
      x += dbx;
      y += dby;
    }
    return;
  }

  int ax2 = ax / 2, ay2 = ay / 2;
  int bx2 = bx / 2, by2 = by / 2;
  const int w2 = std::abs(ax2 + ay2);
  const int h2 = std::abs(bx2 + by2);

  if (2 * w > 3 * h) {
    if ((w2 % 2) && (w > 2)) {
      ax2 += dax;
      ay2 += day;
    }
    gilbert2d(order, W, x, y, ax2, ay2, bx, by);
    gilbert2d(order, W, x + ax2, y + ay2, ax - ax2, ay - ay2, bx, by);
  } else {
    if ((h2 % 2) && (h > 2)) {
      bx2 += dbx;
      by2 += dby;
    }
    gilbert2d(order, W, x, y, bx2, by2, ax2, ay2);
    gilbert2d(order, W, x + bx2, y + by2, ax, ay, bx - bx2, by - by2);
    gilbert2d(order, W, x + (ax - dax) + (bx2 - dbx), y + (ay - day) + (by2 - dby), -bx2, -by2,
              -(ax - ax2), -(ay - ay2));
  }
}

inline std::vector<int> build_hilbert_order(int H, int W) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(H) * W);
  if (W >= H)
    gilbert2d(order, W, 0, 0, W, 0, 0, H);
  else
    gilbert2d(order, W, 0, 0, 0, H, W, 0);
  return order;
}

}  // namespace detail

// Base (direction-0) order for a strategy; starts at the top-left cell.
inline std::vector<int> build_base_order(const ScanSpec& spec, int H, int W) {
  spec.validate();
  if (H < 1 || W < 1) throw std::invalid_argument("build_permutation: H and W must be >= 1");
  switch (spec.strategy) {
    case ScanStrategy::Z:
      return detail::build_z_order(H, W);
    case ScanStrategy::S:
      return detail::build_nss_order(H, W, {W});  // one full-width stripe = row serpentine
    case ScanStrategy::LOCAL_WINDOW:
      return detail::build_local_window_order(H, W, spec.stripe_width);
    case ScanStrategy::HILBERT:
      return detail::build_hilbert_order(H, W);
    case ScanStrategy::NSS: {
      if (spec.stripe_width > W)
        throw std::invalid_argument("nss: stripe width " + std::to_string(spec.stripe_width) +
                                    " exceeds grid width " + std::to_string(W));
      std::vector<int> widths;
      if (spec.shifted)
        widths = shifted_stripe_bounds(W, spec.stripe_width).widths;
      else
        widths = unshifted_stripe_bounds(W, spec.stripe_width);
      return detail::build_nss_order(H, W, widths);
    }
  }
  throw std::invalid_argument("build_permutation: unknown strategy");
}

// direction 0: base; 1: reverse of base; 2: base on the horizontally
// mirrored grid; 3: reverse of direction 2.
inline Permutation build_permutation(const ScanSpec& spec, int H, int W) {
  std::vector<int> order = build_base_order(spec, H, W);
  if (spec.direction == 2 || spec.direction == 3)
    for (int& v : order) {
      const int row = v / W, col = v % W;
      v = row * W + (W - 1 - col);
    }
  if (spec.direction == 1 || spec.direction == 3) std::reverse(order.begin(), order.end());
  return Permutation{std::move(order), H, W};
}

inline std::array<Permutation, 4> four_directions(ScanSpec spec, int H, int W) {
  std::array<Permutation, 4> out;
  for (int d = 0; d < 4; ++d) {
    spec.direction = d;
    out[static_cast<std::size_t>(d)] = build_permutation(spec, H, W);
  }
  return out;
}

// ---- path metrics -----------------------------------------------------------

// Fraction of consecutive pairs that are 4-adjacent in the grid.
inline double continuity_score(const Permutation& p) {
  const int L = p.length();
  if (L < 2) throw std::invalid_argument("continuity_score: needs at least 2 cells");
  int adjacent = 0;
  for (int t = 0; t + 1 < L; ++t) {
    const int a = p.order[static_cast<std::size_t>(t)], b = p.order[static_cast<std::size_t>(t) + 1];
    const int dr = std::abs(a / p.w - b / p.w), dc = std::abs(a % p.w - b % p.w);
    if (dr + dc == 1) ++adjacent;
  }
  return static_cast<double>(adjacent) / static_cast<double>(L - 1);
}

// Worst bounding-box area over the non-overlapping length-n windows of the
// path (a trailing partial window is ignored). Lower is more local.
inline long long locality_profile(const Permutation& p, int n) {
  const int L = p.length();
  if (n < 1 || n > L)
    throw std::invalid_argument("locality_profile: window length " + std::to_string(n) +
                                " outside [1," + std::to_string(L) + "]");
  long long worst = 0;
  for (int t = 0; t + n <= L; t += n) {
    int rmin = p.h, rmax = -1, cmin = p.w, cmax = -1;
    for (int i = t; i < t + n; ++i) {
      const int cell = p.order[static_cast<std::size_t>(i)];
      const int r = cell / p.w, c = cell % p.w;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
    worst = std::max(worst, static_cast<long long>(rmax - rmin + 1) * (cmax - cmin + 1));
  }
  return worst;
}

// Widest column span over the non-overlapping length-n windows.
inline int locality_box_width(const Permutation& p, int n) {
  const int L = p.length();
  if (n < 1 || n > L) throw std::invalid_argument("locality_box_width: bad window length");
  int worst = 0;
  for (int t = 0; t + n <= L; t += n) {
    int cmin = p.w, cmax = -1;
    for (int i = t; i < t + n; ++i) {
      const int c = p.order[static_cast<std::size_t>(i)] % p.w;
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
    worst = std::max(worst, cmax - cmin + 1);
  }
  return worst;
}

// ---- cache ------------------------------------------------------------------

// Permutations are immutable once built; training re-uses them every step.
class PermutationCache {
 public:
  std::shared_ptr<const Permutation> get(const ScanSpec& spec, int H, int W) {
    const std::uint64_t key = make_key(spec, H, W);
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = map_.find(key);
      if (it != map_.end()) return it->second;
    }
    auto perm = std::make_shared<const Permutation>(build_permutation(spec, H, W));
    std::lock_guard<std::mutex> lk(mu_);
    auto [it, inserted] = map_.emplace(key, std::move(perm));
    return it->second;
  }

  static PermutationCache& instance() {
    static PermutationCache cache;
    return cache;
  }

 private:
  static std::uint64_t make_key(const ScanSpec& spec, int H, int W) {
    std::uint64_t k = static_cast<std::uint64_t>(spec.strategy);
    k = k * 131 + static_cast<std::uint64_t>(spec.stripe_width);
    k = k * 131 + static_cast<std::uint64_t>(spec.shifted ? 1 : 0);
    k = k * 131 + static_cast<std::uint64_t>(spec.direction);
    k = k * 1000003 + static_cast<std::uint64_t>(H);
    k = k * 1000003 + static_cast<std::uint64_t>(W);
    return k;
  }

  std::mutex mu_;
  std::unordered_map<std::uint64_t, std::shared_ptr<const Permutation>> map_;
};

}  // namespace mair
