#include "pokedyn/geometry.hpp"

#include <cmath>

namespace pokedyn {

namespace {

Mat3 skew(const Vec3& w) {
    return {0, -w[2], w[1],
            w[2], 0, -w[0],
            -w[1], w[0], 0};
}

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
            r[i * 3 + j] = s;
        }
    return r;
}

Mat3 mat_add(const Mat3& a, const Mat3& b, double sb) {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r[i] = a[i] + sb * b[i];
    return r;
}

constexpr double kSmallAngleSq = 1e-16;  // (1e-8)^2

// Rodrigues coefficients a(s) = sin(t)/t, b(s) = (1-cos(t))/t^2 with s = t^2,
// and their derivatives with respect to s.
void rodrigues_coeffs(double s, double& a, double& b, double& da, double& db) {
    if (s < kSmallAngleSq) {
        a = 1.0 - s / 6.0 + s * s / 120.0;
        b = 0.5 - s / 24.0 + s * s / 720.0;
        da = -1.0 / 6.0 + s / 60.0;
        db = -1.0 / 24.0 + s / 360.0;
    } else {
        double t = std::sqrt(s);
        double st = std::sin(t), ct = std::cos(t);
        a = st / t;
        b = (1.0 - ct) / s;
        da = (t * ct - st) / (2.0 * t * s);
        db = (t * st - 2.0 * (1.0 - ct)) / (2.0 * s * s);
    }
}

}  // namespace

Mat3 rotation_from_axis_angle(const Vec3& w) {
    double s = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    double a, b, da, db;
    rodrigues_coeffs(s, a, b, da, db);
    Mat3 K = skew(w);
    Mat3 K2 = mat_mul(K, K);
    Mat3 I{1, 0, 0, 0, 1, 0, 0, 0, 1};
    return mat_add(mat_add(I, K, a), K2, b);
}

void rotation_and_jacobian(const Vec3& w, Mat3& R, std::array<Mat3, 3>& dR) {
    double s = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    double a, b, da, db;
    rodrigues_coeffs(s, a, b, da, db);
    Mat3 K = skew(w);
    Mat3 K2 = mat_mul(K, K);
    Mat3 I{1, 0, 0, 0, 1, 0, 0, 0, 1};
    R = mat_add(mat_add(I, K, a), K2, b);

    static const std::array<Mat3, 3> E = {skew({1, 0, 0}), skew({0, 1, 0}), skew({0, 0, 1})};
    for (int i = 0; i < 3; ++i) {
        double ds = 2.0 * w[i];
        Mat3 dK2 = mat_add(mat_mul(E[i], K), mat_mul(K, E[i]), 1.0);
        Mat3 d{};
        for (int j = 0; j < 9; ++j)
            d[j] = da * ds * K[j] + a * E[i][j] + db * ds * K2[j] + b * dK2[j];
        dR[i] = d;
    }
}

Tensor apply_rotation(Tape& tape, const Tensor& w, const Vec3& p) {
    if (w.size() != 3) throw std::invalid_argument("apply_rotation: w must have 3 entries");
    Vec3 wv = {w.val()[0], w.val()[1], w.val()[2]};
    Mat3 R;
    std::array<Mat3, 3> dR;
    rotation_and_jacobian(wv, R, dR);
    Tensor out = tape.make_node({3}, w.requires_grad());
    Vec3 r = mat_apply(R, p);
    out.val() = {r[0], r[1], r[2]};
    if (out.requires_grad()) {
        auto wn = w.node(); auto on = out.node();
        tape.push_backward([wn, on, dR, p] {
            wn->ensure_grad();
            for (int i = 0; i < 3; ++i) {
                Vec3 dp = mat_apply(dR[i], p);
                wn->grad[i] += on->grad[0] * dp[0] + on->grad[1] * dp[1] + on->grad[2] * dp[2];
            }
        });
    }
    return out;
}

Tensor transform_layer(Tape& tape, const Tensor& P, const std::vector<uint8_t>& valid,
                       const Tensor& masks, const Tensor& se3) {
    if (masks.shape().size() != 3 || se3.shape().size() != 2 || se3.shape()[1] != 6)
        throw std::invalid_argument("transform_layer: masks must be [K,H,W], se3 [K,6]");
    if (masks.shape()[0] != se3.shape()[0])
        throw std::invalid_argument(
            "transform_layer: K mismatch between masks (" + std::to_string(masks.shape()[0]) +
            ") and transforms (" + std::to_string(se3.shape()[0]) + ")");
    int K = masks.shape()[0], H = masks.shape()[1], W = masks.shape()[2];
    if (P.shape() != Shape{H, W, 3})
        throw std::invalid_argument("transform_layer: P must be [H,W,3] matching masks");
    std::size_t npix = static_cast<std::size_t>(H) * W;
    if (valid.size() != npix) throw std::invalid_argument("transform_layer: valid size mismatch");

    std::vector<Mat3> R(K);
    std::vector<std::array<Mat3, 3>> dR(K);
    std::vector<Vec3> T(K);
    for (int k = 0; k < K; ++k) {
        Vec3 w = {se3.val()[k * 6 + 0], se3.val()[k * 6 + 1], se3.val()[k * 6 + 2]};
        T[k] = {se3.val()[k * 6 + 3], se3.val()[k * 6 + 4], se3.val()[k * 6 + 5]};
        rotation_and_jacobian(w, R[k], dR[k]);
    }

    bool rg = P.requires_grad() || masks.requires_grad() || se3.requires_grad();
    Tensor out = tape.make_node({H, W, 3}, rg);
    for (std::size_t p = 0; p < npix; ++p) {
        Vec3 x = {P.val()[p * 3], P.val()[p * 3 + 1], P.val()[p * 3 + 2]};
        if (!valid[p]) {
            out.val()[p * 3] = x[0]; out.val()[p * 3 + 1] = x[1]; out.val()[p * 3 + 2] = x[2];
            continue;
        }
        Vec3 acc = {0, 0, 0};
        for (int k = 0; k < K; ++k) {
            double m = masks.val()[k * npix + p];
            Vec3 y = mat_apply(R[k], x);
            acc[0] += m * (y[0] + T[k][0]);
            acc[1] += m * (y[1] + T[k][1]);
            acc[2] += m * (y[2] + T[k][2]);
        }
        out.val()[p * 3] = acc[0]; out.val()[p * 3 + 1] = acc[1]; out.val()[p * 3 + 2] = acc[2];
    }

    if (rg) {
        auto Pn = P.node(); auto mn = masks.node(); auto sn = se3.node(); auto on = out.node();
        tape.push_backward([Pn, mn, sn, on, R, dR, T, K, npix, valid] {
            if (Pn->requires_grad) Pn->ensure_grad();
            if (mn->requires_grad) mn->ensure_grad();
            if (sn->requires_grad) sn->ensure_grad();
            for (std::size_t p = 0; p < npix; ++p) {
                Vec3 g = {on->grad[p * 3], on->grad[p * 3 + 1], on->grad[p * 3 + 2]};
                Vec3 x = {Pn->val[p * 3], Pn->val[p * 3 + 1], Pn->val[p * 3 + 2]};
                if (!valid[p]) {
                    if (Pn->requires_grad) {
                        Pn->grad[p * 3] += g[0]; Pn->grad[p * 3 + 1] += g[1]; Pn->grad[p * 3 + 2] += g[2];
                    }
                    continue;
                }
                for (int k = 0; k < K; ++k) {
                    double m = mn->val[k * npix + p];
                    Vec3 y = mat_apply(R[k], x);
                    if (mn->requires_grad)
                        mn->grad[k * npix + p] += g[0] * (y[0] + T[k][0]) + g[1] * (y[1] + T[k][1]) +
                                                  g[2] * (y[2] + T[k][2]);
                    if (sn->requires_grad) {
                        for (int i = 0; i < 3; ++i) {
                            Vec3 dy = mat_apply(dR[k][i], x);
                            sn->grad[k * 6 + i] += m * (g[0] * dy[0] + g[1] * dy[1] + g[2] * dy[2]);
                        }
                        sn->grad[k * 6 + 3] += m * g[0];
                        sn->grad[k * 6 + 4] += m * g[1];
                        sn->grad[k * 6 + 5] += m * g[2];
                    }
                    if (Pn->requires_grad) {
                        // R^T g
                        Pn->grad[p * 3 + 0] += m * (R[k][0] * g[0] + R[k][3] * g[1] + R[k][6] * g[2]);
                        Pn->grad[p * 3 + 1] += m * (R[k][1] * g[0] + R[k][4] * g[1] + R[k][7] * g[2]);
                        Pn->grad[p * 3 + 2] += m * (R[k][2] * g[0] + R[k][5] * g[1] + R[k][8] * g[2]);
                    }
                }
            }
        });
    }
    return out;
}

Tensor project_to_flow(Tape& tape, const Cloud& P_t, const Tensor& P_hat,
                       const CameraIntrinsics& cam, int* clamped) {
    int H = P_t.H, W = P_t.W;
    if (P_hat.shape() != Shape{H, W, 3})
        throw std::invalid_argument("project_to_flow: P_hat shape mismatch");
    constexpr double kZeps = 1e-6;
    Tensor out = tape.make_node({H, W, 2}, P_hat.requires_grad());
    std::vector<uint8_t> active(P_t.npix(), 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * W + x;
            if (!P_t.valid[p]) continue;
            double Z = P_hat.val()[p * 3 + 2];
            if (Z <= kZeps) {
                if (clamped) ++*clamped;
                continue;
            }
            active[p] = 1;
            double X = P_hat.val()[p * 3], Y = P_hat.val()[p * 3 + 1];
            out.val()[p * 2 + 0] = cam.fx * X / Z + cam.cx - x;
            out.val()[p * 2 + 1] = cam.fy * Y / Z + cam.cy - y;
        }
    if (out.requires_grad()) {
        auto Pn = P_hat.node(); auto on = out.node();
        tape.push_backward([Pn, on, cam, active, H, W] {
            Pn->ensure_grad();
            for (std::size_t p = 0; p < active.size(); ++p) {
                if (!active[p]) continue;
                double X = Pn->val[p * 3], Y = Pn->val[p * 3 + 1], Z = Pn->val[p * 3 + 2];
                double gu = on->grad[p * 2], gv = on->grad[p * 2 + 1];
                Pn->grad[p * 3 + 0] += gu * cam.fx / Z;
                Pn->grad[p * 3 + 1] += gv * cam.fy / Z;
                Pn->grad[p * 3 + 2] += -(gu * cam.fx * X + gv * cam.fy * Y) / (Z * Z);
            }
        });
    }
    return out;
}

void bilinear_sample(const std::vector<double>& img, int H, int W, int C,
                     double x, double y, double* out) {
    x = std::min(std::max(x, 0.0), static_cast<double>(W - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(H - 1));
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    if (x0 > W - 2) x0 = W - 2;
    if (y0 > H - 2) y0 = H - 2;
    if (x0 < 0) x0 = 0;
    if (y0 < 0) y0 = 0;
    double ax = x - x0, ay = y - y0;
    for (int c = 0; c < C; ++c) {
        double v00 = img[(static_cast<std::size_t>(y0) * W + x0) * C + c];
        double v01 = img[(static_cast<std::size_t>(y0) * W + x0 + 1) * C + c];
        double v10 = img[(static_cast<std::size_t>(y0 + 1) * W + x0) * C + c];
        double v11 = img[(static_cast<std::size_t>(y0 + 1) * W + x0 + 1) * C + c];
        out[c] = (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
    }
}

Tensor bilinear_warp(Tape& tape, const Tensor& I_next, const Tensor& flow) {
    if (I_next.shape().size() != 3 || I_next.shape()[2] != 3)
        throw std::invalid_argument("bilinear_warp: image must be [H,W,3]");
    int H = I_next.shape()[0], W = I_next.shape()[1];
    if (flow.shape() != Shape{H, W, 2})
        throw std::invalid_argument("bilinear_warp: flow shape mismatch");
    bool rg = I_next.requires_grad() || flow.requires_grad();
    Tensor out = tape.make_node({H, W, 3}, rg);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * W + x;
            bilinear_sample(I_next.val(), H, W, 3,
                            x + flow.val()[p * 2], y + flow.val()[p * 2 + 1], &out.val()[p * 3]);
        }
    if (rg) {
        auto In = I_next.node(); auto fn = flow.node(); auto on = out.node();
        tape.push_backward([In, fn, on, H, W] {
            if (In->requires_grad) In->ensure_grad();
            if (fn->requires_grad) fn->ensure_grad();
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    std::size_t p = static_cast<std::size_t>(y) * W + x;
                    double sx = x + fn->val[p * 2], sy = y + fn->val[p * 2 + 1];
                    bool in_x = sx > 0.0 && sx < W - 1;  // clamped coords have zero flow grad
                    bool in_y = sy > 0.0 && sy < H - 1;
                    double cx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
                    double cy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
                    int x0 = std::min(static_cast<int>(std::floor(cx)), W - 2);
                    int y0 = std::min(static_cast<int>(std::floor(cy)), H - 2);
                    double ax = cx - x0, ay = cy - y0;
                    for (int c = 0; c < 3; ++c) {
                        double g = on->grad[p * 3 + c];
                        if (g == 0.0) continue;
                        std::size_t i00 = (static_cast<std::size_t>(y0) * W + x0) * 3 + c;
                        std::size_t i01 = (static_cast<std::size_t>(y0) * W + x0 + 1) * 3 + c;
                        std::size_t i10 = (static_cast<std::size_t>(y0 + 1) * W + x0) * 3 + c;
                        std::size_t i11 = (static_cast<std::size_t>(y0 + 1) * W + x0 + 1) * 3 + c;
                        double v00 = In->val[i00], v01 = In->val[i01];
                        double v10 = In->val[i10], v11 = In->val[i11];
                        if (In->requires_grad) {
                            In->grad[i00] += g * (1 - ay) * (1 - ax);
                            In->grad[i01] += g * (1 - ay) * ax;
                            In->grad[i10] += g * ay * (1 - ax);
                            In->grad[i11] += g * ay * ax;
                        }
                        if (fn->requires_grad) {
                            if (in_x)
                                fn->grad[p * 2] += g * ((1 - ay) * (v01 - v00) + ay * (v11 - v10));
                            if (in_y)
                                fn->grad[p * 2 + 1] += g * ((1 - ax) * (v10 - v00) + ax * (v11 - v01));
                        }
                    }
                }
        });
    }
    return out;
}

}  // namespace pokedyn
