#include "simshear/plotting.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace simshear {
namespace {

using Color = std::array<std::uint8_t, 3>;
using Glyph = std::array<std::uint8_t, 7>;

constexpr Color kLeader{220, 30, 30};
constexpr Color kFollower{30, 60, 220};
constexpr Color kInk{20, 20, 20};
constexpr Color kFrame{150, 150, 150};

// Rows top to bottom, bit 4 is the leftmost column.
const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs{
      {' ', {0, 0, 0, 0, 0, 0, 0}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
      {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
      {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
      {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},
      {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
      {'~', {0x04, 0x04, 0x1F, 0x04, 0x04, 0, 0x1F}},  // plus-minus
      {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
      {'|', {0x04, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
      {'/', {0, 0x01, 0x02, 0x04, 0x08, 0x10, 0}},
      {'a', {0, 0, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
      {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E}},
      {'c', {0, 0, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
      {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F}},
      {'e', {0, 0, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'f', {0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08}},
      {'g', {0, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
      {'j', {0x02, 0, 0x06, 0x02, 0x02, 0x12, 0x0C}},
      {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
      {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'m', {0, 0, 0x1A, 0x15, 0x15, 0x11, 0x11}},
      {'n', {0, 0, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'o', {0, 0, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
      {'p', {0, 0, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
      {'q', {0, 0, 0x0D, 0x13, 0x0F, 0x01, 0x01}},
      {'r', {0, 0, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'s', {0, 0, 0x0E, 0x10, 0x0E, 0x01, 0x1E}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
      {'u', {0, 0, 0x11, 0x11, 0x11, 0x13, 0x0D}},
      {'v', {0, 0, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'w', {0, 0, 0x11, 0x11, 0x15, 0x15, 0x0A}},
      {'x', {0, 0, 0x11, 0x0A, 0x04, 0x0A, 0x11}},
      {'y', {0, 0, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
      {'z', {0, 0, 0x1F, 0x02, 0x04, 0x08, 0x1F}},
  };
  return glyphs;
}

// UTF-8 "±" becomes the single glyph '~'.
std::string to_glyphs(const std::string& text) {
  std::string out;
  for (size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == 0xC2 && i + 1 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0xB1) {
      out.push_back('~');
      ++i;
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

void dot(RgbImage& img, int x, int y, const Color& c, int size) {
  for (int dy = 0; dy < size; ++dy)
    for (int dx = 0; dx < size; ++dx) img.set(x + dx, y + dy, c[0], c[1], c[2]);
}

void line(RgbImage& img, int x0, int y0, int x1, int y1, const Color& c, int width) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  const int off = width / 2;
  while (true) {
    dot(img, x0 - off, y0 - off, c, width);
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

std::string format_error(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "error=%.2f\xC2\xB1%.2f mm", mean, sd);
  return buf;
}

}  // namespace

int text_width(const std::string& text, int scale) {
  return static_cast<int>(to_glyphs(text).size()) * 6 * scale;
}

void draw_text(RgbImage& image, int x, int y, const std::string& text, const Color& color, int scale) {
  static const Glyph box{0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};
  int cx = x;
  for (char ch : to_glyphs(text)) {
    const auto it = font().find(ch);
    const Glyph& g = it == font().end() ? box : it->second;
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if (g[r] & (0x10 >> c)) dot(image, cx + c * scale, y + r * scale, color, scale);
    cx += 6 * scale;
  }
}

std::string trajectory_plot_title(const servo::TaskLog& log) {
  const servo::TrackingError err = servo::replay_tracking_error(log);
  return format_error(err.mean, err.std);
}

RgbImage render_trajectory_plot(const servo::TaskLog& log) {
  if (log.steps.empty()) throw std::runtime_error("task log has no steps to plot");
  const servo::TaskKind task =
      servo::task_kind_from_string(log.header.at("config").at("task").get<std::string>());
  const auto off = log.header.at("contact_offset").get<std::vector<double>>();
  const Eigen::Vector3d offset(off.at(0), off.at(1), off.at(2));
  const int second = task == servo::TaskKind::kColift ? 2 : 1;

  std::vector<Eigen::Vector2d> leader, follower;
  for (const auto& s : log.steps) {
    const Eigen::Vector3d target = servo::leader_world(s.leader, task) * offset;
    const Eigen::Vector3d f = s.follower.position();
    leader.emplace_back(target.x(), target[second]);
    follower.emplace_back(f.x(), f[second]);
  }

  constexpr int kSize = 420, kTitle = 40, kMargin = 20;
  RgbImage img(kSize, kSize + kTitle);
  Eigen::Vector2d lo = leader.front(), hi = leader.front();
  for (const auto* path : {&leader, &follower})
    for (const auto& p : *path) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
  const Eigen::Vector2d mid = (lo + hi) / 2.0;
  const double px = (kSize - 2 * kMargin) / (1.1 * span);
  auto to_px = [&](const Eigen::Vector2d& p) {
    return std::pair<int, int>{static_cast<int>(std::lround(kSize / 2.0 + (p.x() - mid.x()) * px)),
                               static_cast<int>(std::lround(kTitle + kSize / 2.0 - (p.y() - mid.y()) * px))};
  };
  const int x0 = kMargin / 2, x1 = kSize - kMargin / 2, y0 = kTitle + kMargin / 2, y1 = kTitle + kSize - kMargin / 2;
  line(img, x0, y0, x1, y0, kFrame, 1);
  line(img, x0, y1, x1, y1, kFrame, 1);
  line(img, x0, y0, x0, y1, kFrame, 1);
  line(img, x1, y0, x1, y1, kFrame, 1);
  auto polyline = [&](const std::vector<Eigen::Vector2d>& pts, const Color& c) {
    for (size_t i = 1; i < pts.size(); ++i) {
      const auto [ax, ay] = to_px(pts[i - 1]);
      const auto [bx, by] = to_px(pts[i]);
      line(img, ax, ay, bx, by, c, 2);
    }
    if (pts.size() == 1) {
      const auto [ax, ay] = to_px(pts[0]);
      dot(img, ax - 1, ay - 1, c, 3);
    }
  };
  polyline(leader, kLeader);
  polyline(follower, kFollower);

  const std::string title = trajectory_plot_title(log);
  draw_text(img, (kSize - text_width(title, 2)) / 2, 8, title, kInk, 2);
  draw_text(img, x0 + 6, y1 - 22, "leader", kLeader, 1);
  draw_text(img, x0 + 6, y1 - 12, "follower", kFollower, 1);
  return img;
}

void plot_trajectories(const std::filesystem::path& log_path, const std::filesystem::path& output_path) {
  const servo::TaskResult r = servo::read_task_log(log_path);
  write_png_rgb(output_path, render_trajectory_plot(r.log));
}

RgbImage render_image_grid(const std::vector<std::vector<ImageArray>>& rows,
                           const std::vector<std::string>& column_labels, int zoom) {
  if (rows.empty() || column_labels.empty()) throw std::invalid_argument("empty image grid");
  const int h = static_cast<int>(rows.front().front().rows()) * zoom;
  const int w = static_cast<int>(rows.front().front().cols()) * zoom;
  constexpr int kGap = 4, kHeader = 16;
  const int ncol = static_cast<int>(column_labels.size());
  RgbImage img(ncol * (w + kGap) + kGap, kHeader + static_cast<int>(rows.size()) * (h + kGap) + kGap);
  for (int c = 0; c < ncol; ++c) {
    const int x = kGap + c * (w + kGap);
    draw_text(img, x + std::max(0, (w - text_width(column_labels[c])) / 2), 4, column_labels[c], kInk, 1);
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != ncol) throw std::invalid_argument("image grid row has wrong length");
    for (int c = 0; c < ncol; ++c) {
      const ImageArray& im = rows[r][c];
      if (im.rows() * zoom != h || im.cols() * zoom != w) throw std::invalid_argument("image grid sizes differ");
      const int x = kGap + c * (w + kGap), y = kHeader + kGap + static_cast<int>(r) * (h + kGap);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const auto v = static_cast<std::uint8_t>(std::lround(quantize_8bit(im(i / zoom, j / zoom)) * 255.0f));
          img.set(x + j, y + i, v, v, v);
        }
    }
  }
  return img;
}

RgbImage render_error_bars(const std::vector<std::pair<std::string, estimate::EstimatorReport>>& reports) {
  if (reports.empty()) throw std::invalid_argument("no estimator reports to plot");
  const auto& vars = reports.front().second.variables;
  for (const auto& [name, r] : reports)
    if (r.variables.size() != vars.size()) throw std::invalid_argument("reports cover different variables");
  static const std::vector<Color> palette{{30, 60, 220}, {220, 30, 30}, {30, 150, 60}, {200, 120, 0}};
  constexpr int kPanelW = 150, kPanelH = 170, kTop = 40, kBase = 150, kBarArea = 110;
  const int nbars = static_cast<int>(reports.size()) + 1;
  const int bar_w = std::max(6, (kPanelW - 30) / nbars - 4);
  RgbImage img(static_cast<int>(vars.size()) * kPanelW + 10, kTop + kPanelH + 14 * nbars + 10);
  draw_text(img, 10, 8, "mae on real images (gray: predict mean)", kInk, 1);
  for (size_t v = 0; v < vars.size(); ++v) {
    const int x0 = 10 + static_cast<int>(v) * kPanelW;
    std::vector<double> values{vars[v].baseline_mae};
    for (const auto& [name, r] : reports) values.push_back(r.variables[v].mae);
    const double top = std::max(1e-9, *std::max_element(values.begin(), values.end()));
    draw_text(img, x0, kTop - 14, vars[v].name, kInk, 1);
    line(img, x0, kTop + kBase, x0 + kPanelW - 20, kTop + kBase, kFrame, 1);
    for (int b = 0; b < nbars; ++b) {
      const Color c = b == 0 ? kFrame : palette[(b - 1) % palette.size()];
      const int h = static_cast<int>(std::lround(values[b] / top * kBarArea));
      const int x = x0 + 4 + b * (bar_w + 4);
      for (int y = kTop + kBase - h; y < kTop + kBase; ++y)
        for (int dx = 0; dx < bar_w; ++dx) img.set(x + dx, y, c[0], c[1], c[2]);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", values[b]);
      draw_text(img, x0, kTop + kBase + 6 + 10 * b, buf, c, 1);
    }
  }
  for (size_t m = 0; m < reports.size(); ++m) {
    const Color c = palette[m % palette.size()];
    draw_text(img, 10, kTop + kPanelH + 14 * static_cast<int>(m) + 10, reports[m].first, c, 1);
  }
  return img;
}

}  // namespace simshear
