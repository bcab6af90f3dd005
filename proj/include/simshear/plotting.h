#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simshear/estimate/gdnn.h"
#include "simshear/image_io.h"
#include "simshear/servo/servo.h"

namespace simshear {

/// 5x7 bitmap text; `scale` enlarges each dot. Unknown glyphs draw a box.
void draw_text(RgbImage& image, int x, int y, const std::string& text, const std::array<std::uint8_t, 3>& color,
               int scale = 1);
int text_width(const std::string& text, int scale = 1);

/// "error=mean±std mm" from the replayed error series.
std::string trajectory_plot_title(const servo::TaskLog& log);

/// Planar overlay of the leader-carried target (red) and the follower
/// (blue), titled "error=mean±std mm". Tracking runs are drawn in world
/// x-y, co-lift runs in world x-z.
RgbImage render_trajectory_plot(const servo::TaskLog& log);

/// Reads a task log and writes its overlay PNG.
void plot_trajectories(const std::filesystem::path& log_path, const std::filesystem::path& output_path);

/// Image grid, one row per sample, with a label over each column.
RgbImage render_image_grid(const std::vector<std::vector<ImageArray>>& rows,
                           const std::vector<std::string>& column_labels, int zoom = 2);

/// One panel per label variable: predict-mean baseline (gray) next to each
/// model's MAE. Panels scale independently since units differ.
RgbImage render_error_bars(const std::vector<std::pair<std::string, estimate::EstimatorReport>>& reports);

}  // namespace simshear
