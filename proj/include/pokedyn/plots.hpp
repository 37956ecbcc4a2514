#pragma once

#include <string>
#include <vector>

#include "pokedyn/geometry.hpp"

namespace pokedyn {

/// Minimal 24-bit RGB raster with a BMP writer; enough for deterministic
/// metric plots without an imaging dependency.
struct Canvas {
    int W = 0, H = 0;
    std::vector<uint8_t> rgb;  // H*W*3, row 0 = top

    Canvas(int w, int h, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255);
    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b);
    void line(double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b);
    void rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
    void save_bmp(const std::string& path) const;
};

struct Series {
    std::string label;
    std::vector<double> y;  // x is the index
    uint8_t r = 20, g = 60, b = 200;
};

/// Line chart with auto-scaled axes and tick marks.
void plot_lines(const std::string& path, const std::vector<Series>& series,
                int width = 640, int height = 420);

/// Labeled vertical bar chart (labels drawn as color legend blocks only;
/// values printed to an adjacent .txt file for readability).
void plot_bars(const std::string& path, const std::vector<std::string>& labels,
               const std::vector<double>& values, int width = 640, int height = 420);

/// Saves an Image (doubles in [0,1]) as BMP.
void save_image_bmp(const std::string& path, const Image& img);

/// False-color visualization of a [H,W,2] pixel-flow field (hue = direction,
/// saturation = magnitude).
void save_flow_bmp(const std::string& path, const std::vector<double>& flow, int H, int W);

/// Hard-assignment mask visualization: argmax channel of a [K,H,W] field.
void save_mask_bmp(const std::string& path, const std::vector<double>& masks, int K, int H, int W);

}  // namespace pokedyn
