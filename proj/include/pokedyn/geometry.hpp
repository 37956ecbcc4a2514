#pragma once

#include <array>
#include <cstdint>

#include "pokedyn/autodiff.hpp"

namespace pokedyn {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
};

/// H x W grid of camera-frame points (X right, Y down, Z forward), meters.
/// valid is false where depth is missing; such pixels are excluded from all
/// losses and carry zero flow.
struct Cloud {
    int H = 0, W = 0;
    std::vector<double> pts;     // H*W*3, layout (y*W+x)*3 + {0,1,2}
    std::vector<uint8_t> valid;  // H*W

    void init(int h, int w) {
        H = h; W = w;
        pts.assign(static_cast<std::size_t>(h) * w * 3, 0.0);
        valid.assign(static_cast<std::size_t>(h) * w, 0);
    }
    std::size_t npix() const { return static_cast<std::size_t>(H) * W; }
};

/// H x W RGB image, values in [0,1], layout (y*W+x)*3 + c.
struct Image {
    int H = 0, W = 0;
    std::vector<double> rgb;
    void init(int h, int w) { H = h; W = w; rgb.assign(static_cast<std::size_t>(h) * w * 3, 0.0); }
};

Mat3 rotation_from_axis_angle(const Vec3& w);
/// Rotation and the three partials dR/dw_i. Smooth through ||w|| -> 0 via a
/// Taylor branch below 1e-8.
void rotation_and_jacobian(const Vec3& w, Mat3& R, std::array<Mat3, 3>& dR);

inline Vec3 mat_apply(const Mat3& m, const Vec3& p) {
    return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2],
            m[3] * p[0] + m[4] * p[1] + m[5] * p[2],
            m[6] * p[0] + m[7] * p[1] + m[8] * p[2]};
}

/// Differentiable R(w)*p for tests of the rotation parametrization.
/// w is a tape tensor of shape [3]; p is constant.
Tensor apply_rotation(Tape& tape, const Tensor& w, const Vec3& p);

/// Per-point convex combination of K rigidly transformed copies of P.
/// P: [H,W,3] tensor (may be a constant leaf), masks: [K,H,W] (per-pixel sum
/// 1), se3: [K,6] rows (wx,wy,wz,tx,ty,tz). Invalid pixels pass through.
Tensor transform_layer(Tape& tape, const Tensor& P, const std::vector<uint8_t>& valid,
                       const Tensor& masks, const Tensor& se3);

/// Pinhole projection of predicted motion into pixel flow: output [H,W,2]
/// with U = fx*X/Z + cx - x, V = fy*Y/Z + cy - y at valid pixels, zero
/// elsewhere. Pixels with Z <= 1e-6 m get zero flow and bump *clamped.
Tensor project_to_flow(Tape& tape, const Cloud& P_t, const Tensor& P_hat,
                       const CameraIntrinsics& cam, int* clamped = nullptr);

/// Backward warp: out(x,y) = bilinear sample of I_next at (x+U, y+V), border
/// clamped. I_next: [H,W,3] tensor, flow: [H,W,2].
Tensor bilinear_warp(Tape& tape, const Tensor& I_next, const Tensor& flow);

/// Plain (non-tape) bilinear sample of a [H,W,C] buffer, border clamped.
void bilinear_sample(const std::vector<double>& img, int H, int W, int C,
                     double x, double y, double* out);

}  // namespace pokedyn
