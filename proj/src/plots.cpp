#include "pokedyn/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pokedyn {

Canvas::Canvas(int w, int h, uint8_t r, uint8_t g, uint8_t b) : W(w), H(h) {
    rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < rgb.size(); i += 3) { rgb[i] = r; rgb[i + 1] = g; rgb[i + 2] = b; }
}

void Canvas::set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= W || y < 0 || y >= H) return;
    std::size_t i = (static_cast<std::size_t>(y) * W + x) * 3;
    rgb[i] = r; rgb[i + 1] = g; rgb[i + 2] = b;
}

void Canvas::line(double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b) {
    double dx = x1 - x0, dy = y1 - y0;
    int n = static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1;
    for (int i = 0; i <= n; ++i) {
        double t = n ? static_cast<double>(i) / n : 0.0;
        set(static_cast<int>(std::lround(x0 + t * dx)), static_cast<int>(std::lround(y0 + t * dy)),
            r, g, b);
    }
}

void Canvas::rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
        for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, r, g, b);
}

void Canvas::save_bmp(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    int row_bytes = (W * 3 + 3) & ~3;
    uint32_t data_size = static_cast<uint32_t>(row_bytes) * H;
    uint32_t file_size = 54 + data_size;
    auto u16 = [&](uint16_t v) { f.put(static_cast<char>(v & 0xff)); f.put(static_cast<char>(v >> 8)); };
    auto u32 = [&](uint32_t v) { for (int i = 0; i < 4; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff)); };
    u16(0x4d42); u32(file_size); u32(0); u32(54);
    u32(40); u32(static_cast<uint32_t>(W)); u32(static_cast<uint32_t>(H));
    u16(1); u16(24); u32(0); u32(data_size); u32(2835); u32(2835); u32(0); u32(0);
    std::vector<char> row(row_bytes, 0);
    for (int y = H - 1; y >= 0; --y) {  // BMP stores bottom row first
        for (int x = 0; x < W; ++x) {
            std::size_t i = (static_cast<std::size_t>(y) * W + x) * 3;
            row[x * 3] = static_cast<char>(rgb[i + 2]);
            row[x * 3 + 1] = static_cast<char>(rgb[i + 1]);
            row[x * 3 + 2] = static_cast<char>(rgb[i]);
        }
        f.write(row.data(), row_bytes);
    }
}

namespace {

struct AxisMap {
    double lo, hi;
    int p0, p1;  // pixel range
    double map(double v) const {
        double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.5;
        return p0 + t * (p1 - p0);
    }
};

const uint8_t kPalette[][3] = {{20, 60, 200}, {200, 60, 20},  {20, 150, 60},
                               {150, 20, 180}, {200, 150, 20}, {20, 160, 180}};

}  // namespace

void plot_lines(const std::string& path, const std::vector<Series>& series, int width, int height) {
    if (series.empty()) throw std::invalid_argument("plot_lines: no series");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t maxn = 0;
    for (const auto& s : series) {
        maxn = std::max(maxn, s.y.size());
        for (double v : s.y)
            if (std::isfinite(v)) { lo = std::min(lo, v); hi = std::max(hi, v); }
    }
    if (maxn == 0 || !std::isfinite(lo)) throw std::invalid_argument("plot_lines: no finite data");
    if (hi == lo) { hi += 1; lo -= 1; }

    Canvas c(width, height);
    int ml = 50, mr = 15, mt = 15, mb = 35;
    c.line(ml, height - mb, width - mr, height - mb, 0, 0, 0);
    c.line(ml, mt, ml, height - mb, 0, 0, 0);
    AxisMap xm{0.0, static_cast<double>(maxn > 1 ? maxn - 1 : 1), ml, width - mr};
    AxisMap ym{lo, hi, height - mb, mt};
    for (int t = 0; t <= 4; ++t) {  // ticks
        double v = lo + (hi - lo) * t / 4.0;
        int y = static_cast<int>(std::lround(ym.map(v)));
        c.line(ml - 4, y, ml, y, 0, 0, 0);
        int x = static_cast<int>(std::lround(xm.map(xm.lo + (xm.hi - xm.lo) * t / 4.0)));
        c.line(x, height - mb, x, height - mb + 4, 0, 0, 0);
    }
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        // legend swatch
        c.rect(ml + 8 + static_cast<int>(si) * 18, mt + 4, ml + 20 + static_cast<int>(si) * 18,
               mt + 10, s.r, s.g, s.b);
        for (std::size_t i = 1; i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i - 1]) || !std::isfinite(s.y[i])) continue;
            c.line(xm.map(static_cast<double>(i - 1)), ym.map(s.y[i - 1]),
                   xm.map(static_cast<double>(i)), ym.map(s.y[i]), s.r, s.g, s.b);
        }
    }
    c.save_bmp(path);

    std::ofstream txt(path + ".txt");  // sidecar with the numbers and legend
    txt << "y-range [" << lo << ", " << hi << "], x 0.." << (maxn ? maxn - 1 : 0) << "\n";
    for (const auto& s : series) {
        txt << s.label << ":";
        for (double v : s.y) txt << " " << v;
        txt << "\n";
    }
}

void plot_bars(const std::string& path, const std::vector<std::string>& labels,
               const std::vector<double>& values, int width, int height) {
    if (labels.size() != values.size() || values.empty())
        throw std::invalid_argument("plot_bars: labels/values mismatch or empty");
    double hi = 0;
    for (double v : values)
        if (std::isfinite(v)) hi = std::max(hi, v);
    if (hi == 0) hi = 1;

    Canvas c(width, height);
    int ml = 50, mr = 15, mt = 15, mb = 35;
    c.line(ml, height - mb, width - mr, height - mb, 0, 0, 0);
    c.line(ml, mt, ml, height - mb, 0, 0, 0);
    int n = static_cast<int>(values.size());
    double slot = static_cast<double>(width - ml - mr) / n;
    for (int i = 0; i < n; ++i) {
        const uint8_t* col = kPalette[i % 6];
        double h = std::isfinite(values[i]) ? values[i] / hi : 0;
        int x0 = ml + static_cast<int>(i * slot + slot * 0.15);
        int x1 = ml + static_cast<int>((i + 1) * slot - slot * 0.15);
        int y0 = height - mb - static_cast<int>(h * (height - mb - mt));
        c.rect(x0, y0, x1, height - mb - 1, col[0], col[1], col[2]);
    }
    c.save_bmp(path);

    std::ofstream txt(path + ".txt");
    for (std::size_t i = 0; i < values.size(); ++i) txt << labels[i] << ": " << values[i] << "\n";
}

void save_image_bmp(const std::string& path, const Image& img) {
    Canvas c(img.W, img.H);
    for (int y = 0; y < img.H; ++y)
        for (int x = 0; x < img.W; ++x) {
            std::size_t i = (static_cast<std::size_t>(y) * img.W + x) * 3;
            auto q = [&](double v) {
                return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            };
            c.set(x, y, q(img.rgb[i]), q(img.rgb[i + 1]), q(img.rgb[i + 2]));
        }
    c.save_bmp(path);
}

void save_flow_bmp(const std::string& path, const std::vector<double>& flow, int H, int W) {
    double maxmag = 1e-9;
    for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p)
        maxmag = std::max(maxmag, std::hypot(flow[p * 2], flow[p * 2 + 1]));
    Canvas c(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * W + x;
            double u = flow[p * 2], v = flow[p * 2 + 1];
            double mag = std::hypot(u, v) / maxmag;
            double ang = std::atan2(v, u);  // [-pi, pi] -> hue
            double h6 = (ang + 3.14159265358979) / (2 * 3.14159265358979) * 6.0;
            int sect = static_cast<int>(h6) % 6;
            double f = h6 - std::floor(h6);
            double p1 = 1 - mag, q1 = 1 - mag * f, t1 = 1 - mag * (1 - f);
            double r = 1, g = 1, b = 1;
            switch (sect) {
                case 0: r = 1; g = t1; b = p1; break;
                case 1: r = q1; g = 1; b = p1; break;
                case 2: r = p1; g = 1; b = t1; break;
                case 3: r = p1; g = q1; b = 1; break;
                case 4: r = t1; g = p1; b = 1; break;
                default: r = 1; g = p1; b = q1; break;
            }
            c.set(x, y, static_cast<uint8_t>(r * 255), static_cast<uint8_t>(g * 255),
                  static_cast<uint8_t>(b * 255));
        }
    c.save_bmp(path);
}

void save_mask_bmp(const std::string& path, const std::vector<double>& masks, int K, int H, int W) {
    Canvas c(W, H);
    std::size_t npix = static_cast<std::size_t>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * W + x;
            int best = 0;
            for (int k = 1; k < K; ++k)
                if (masks[k * npix + p] > masks[best * npix + p]) best = k;
            if (best == 0) {
                uint8_t g = static_cast<uint8_t>(40 + 180 * masks[p]);
                c.set(x, y, g, g, g);  // background channel as gray
            } else {
                const uint8_t* col = kPalette[(best - 1) % 6];
                c.set(x, y, col[0], col[1], col[2]);
            }
        }
    c.save_bmp(path);
}

}  // namespace pokedyn
