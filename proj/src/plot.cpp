#include "xctsr/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "xctsr/defecteval.hpp"
#include "xctsr/error.hpp"

namespace xctsr {

namespace {

using Glyph = std::array<std::uint8_t, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}}, {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
  };
  return f;
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb bg) : w_(width), h_(height) {
  require(width > 0 && height > 0, "canvas size must be positive");
  rgb_.resize(std::size_t(w_) * h_ * 3);
  for (std::size_t i = 0; i < rgb_.size(); i += 3) std::copy(bg.begin(), bg.end(), rgb_.begin() + long(i));
}

Rgb Canvas::pixel(int x, int y) const {
  const std::size_t o = (std::size_t(y) * w_ + x) * 3;
  return {rgb_[o], rgb_[o + 1], rgb_[o + 2]};
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  const std::size_t o = (std::size_t(y) * w_ + x) * 3;
  std::copy(c.begin(), c.end(), rgb_.begin() + long(o));
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c, int thickness) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  const int r = thickness / 2;
  while (true) {
    fill_rect(x0 - r, y0 - r, x0 - r + thickness - 1, y0 - r + thickness - 1, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    const char ch = char(std::toupper(static_cast<unsigned char>(s[k])));
    auto it = font().find(ch);
    if (it == font().end()) continue;
    const int ox = x + int(k) * 6 * scale;
    for (int row = 0; row < 7; ++row) {
      for (int col = 0; col < 5; ++col) {
        if (it->second[row] & (0x10 >> col)) {
          fill_rect(ox + col * scale, y + row * scale, ox + col * scale + scale - 1, y + row * scale + scale - 1, c);
        }
      }
    }
  }
}

void Canvas::save_png(const std::filesystem::path& path) const {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw RuntimeFailure("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw RuntimeFailure("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(w_), png_uint_32(h_), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h_; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb_.data() + std::size_t(y) * w_ * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// ---------------------------------------------------------------- figures

namespace {

constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kGrey{200, 200, 200};
const std::array<Rgb, 6> kPalette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189},
                                   {140, 86, 75}}};

std::string fmt(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

void plot_psnr_bars(const std::vector<std::pair<std::string, SlicePSNRStats>>& rows,
                    const std::filesystem::path& png) {
  require(!rows.empty(), "nothing to plot");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [label, s] : rows) {
    if (s.degenerate) continue;
    lo = std::min(lo, s.mean_db - s.std_db);
    hi = std::max(hi, s.mean_db + s.std_db);
  }
  if (!std::isfinite(lo)) {
    lo = 0;
    hi = 1;
  }
  lo = std::floor(lo) - 1;
  hi = std::ceil(hi) + 1;
  const int left = 60, right = 20, top = 30, bottom = 50, bar_w = 50, gap = 30;
  const int W = left + right + int(rows.size()) * (bar_w + gap) + gap;
  const int H = 360;
  Canvas c(std::max(W, 240), H);
  const int y0 = H - bottom, y1 = top;
  auto ymap = [&](double v) { return int(std::lround(y0 - (v - lo) / (hi - lo) * (y0 - y1))); };
  c.text(left, 8, "MEAN PSNR (DB) +- STD", kBlack);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    c.line(left, ymap(v), c.width() - right, ymap(v), kGrey);
    c.text(4, ymap(v) - 3, fmt(v, 1), kBlack);
  }
  c.line(left, y0, left, y1, kBlack);
  c.line(left, y0, c.width() - right, y0, kBlack);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i].second;
    const int x = left + gap + int(i) * (bar_w + gap);
    if (!s.degenerate) {
      c.fill_rect(x, ymap(s.mean_db), x + bar_w, y0 - 1, kPalette[i % kPalette.size()]);
      const int xm = x + bar_w / 2;
      c.line(xm, ymap(s.mean_db - s.std_db), xm, ymap(s.mean_db + s.std_db), kBlack, 2);
      c.line(xm - 8, ymap(s.mean_db + s.std_db), xm + 8, ymap(s.mean_db + s.std_db), kBlack, 2);
      c.line(xm - 8, ymap(s.mean_db - s.std_db), xm + 8, ymap(s.mean_db - s.std_db), kBlack, 2);
    }
    c.text(x, y0 + 10, rows[i].first.substr(0, std::size_t((bar_w + gap) / 6)), kBlack);
  }
  c.save_png(png);
}

void plot_detection_curves(const std::vector<std::pair<std::string, BinnedDetectionReport>>& reports,
                           const std::filesystem::path& png) {
  require(!reports.empty(), "nothing to plot");
  const int pw = 300, ph = 260, left = 40, top = 30, bottom = 40, right = 16;
  Canvas c(int(reports.size()) * pw, ph);
  const std::array<Rgb, 3> colours{kPalette[0], kPalette[2], kPalette[3]};
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k].second;
    const int ox = int(k) * pw;
    const int x0 = ox + left, x1 = ox + pw - right, y0 = ph - bottom, y1 = top;
    const double dlo = r.bin_edges_um.front(), dhi = r.bin_edges_um.back();
    auto xmap = [&](double d) { return int(std::lround(x0 + (d - dlo) / (dhi - dlo) * (x1 - x0))); };
    auto ymap = [&](double v) { return int(std::lround(y0 - v * (y0 - y1))); };
    c.text(x0, 8, reports[k].first, kBlack);
    for (int t = 0; t <= 4; ++t) {
      c.line(x0, ymap(t / 4.0), x1, ymap(t / 4.0), kGrey);
      c.text(ox + 4, ymap(t / 4.0) - 3, fmt(t / 4.0, 2), kBlack);
    }
    c.line(x0, y0, x0, y1, kBlack);
    c.line(x0, y0, x1, y0, kBlack);
    c.text(x0, y0 + 8, fmt(dlo, 0), kBlack);
    c.text(x1 - Canvas::text_width(fmt(dhi, 0)), y0 + 8, fmt(dhi, 0), kBlack);
    c.text(x0 + 60, y0 + 22, "DIAMETER (UM)", kBlack);
    for (int m = 0; m < 3; ++m) {
      int px = -1, py = -1;
      for (const auto& b : r.per_bin) {
        const auto& v = m == 0 ? b.recall : m == 1 ? b.precision : b.f1;
        if (!v) {
          px = -1;
          continue;
        }
        const int x = xmap(0.5 * (b.lo_um + b.hi_um)), y = ymap(*v);
        c.fill_rect(x - 2, y - 2, x + 2, y + 2, colours[m]);
        if (px >= 0) c.line(px, py, x, y, colours[m], 2);
        px = x;
        py = y;
      }
    }
    const char* names[3] = {"R", "P", "F1"};
    for (int m = 0; m < 3; ++m) c.text(x1 - 60 + m * 20, y1 + 4, names[m], colours[m]);
  }
  c.save_png(png);
}

}  // namespace xctsr
