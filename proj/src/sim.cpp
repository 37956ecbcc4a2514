#include "pokedyn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pokedyn {

namespace {

constexpr double kPi = 3.14159265358979323846;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline Vec2 rot2(const Vec2& v, double ang) {
    double c = std::cos(ang), s = std::sin(ang);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}
inline double norm2(const Vec2& v) { return std::sqrt(v.x * v.x + v.y * v.y); }

std::vector<Vec2> world_verts(const ObjectState& o) {
    std::vector<Vec2> out(o.shape.verts.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        Vec2 r = rot2(o.shape.verts[i], o.yaw);
        out[i] = {r.x + o.pos.x, r.y + o.pos.y};
    }
    return out;
}

double point_segment_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
    Vec2 ab = {b.x - a.x, b.y - a.y};
    double t = ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / (ab.x * ab.x + ab.y * ab.y);
    t = std::clamp(t, 0.0, 1.0);
    Vec2 c = {a.x + t * ab.x, a.y + t * ab.y};
    return std::hypot(p.x - c.x, p.y - c.y);
}

}  // namespace

double ShapeSpec::bound_radius() const {
    if (kind == Kind::Disc) return radius;
    double r = 0;
    for (const auto& v : verts) r = std::max(r, std::hypot(v.x, v.y));
    return r;
}

double footprint_signed_distance(const ObjectState& o, const Vec2& p) {
    Vec2 d = {p.x - o.pos.x, p.y - o.pos.y};
    Vec2 l = rot2(d, -o.yaw);
    if (o.shape.kind == ShapeSpec::Kind::Disc) return std::hypot(l.x, l.y) - o.shape.radius;
    const auto& vs = o.shape.verts;
    double max_plane = -1e30;
    double min_edge = 1e30;
    bool inside = true;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        const Vec2& a = vs[i];
        const Vec2& b = vs[(i + 1) % vs.size()];
        Vec2 e = {b.x - a.x, b.y - a.y};
        double len = norm2(e);
        // outward normal of a CCW polygon
        Vec2 n = {e.y / len, -e.x / len};
        double pd = (l.x - a.x) * n.x + (l.y - a.y) * n.y;
        max_plane = std::max(max_plane, pd);
        if (pd > 0) inside = false;
        min_edge = std::min(min_edge, point_segment_dist(l, a, b));
    }
    return inside ? max_plane : min_edge;
}

bool footprints_overlap(const ObjectState& a, const ObjectState& b) {
    double cd = std::hypot(a.pos.x - b.pos.x, a.pos.y - b.pos.y);
    if (cd > a.shape.bound_radius() + b.shape.bound_radius()) return false;
    if (a.shape.kind == ShapeSpec::Kind::Disc && b.shape.kind == ShapeSpec::Kind::Disc)
        return cd < a.shape.radius + b.shape.radius;
    if (a.shape.kind == ShapeSpec::Kind::Disc) return footprints_overlap(b, a);
    if (b.shape.kind == ShapeSpec::Kind::Disc)
        return footprint_signed_distance(a, b.pos) < b.shape.radius;
    // SAT over both polygons' edge normals
    auto va = world_verts(a), vb = world_verts(b);
    auto separated_on = [](const std::vector<Vec2>& axes_src, const std::vector<Vec2>& p,
                           const std::vector<Vec2>& q) {
        for (std::size_t i = 0; i < axes_src.size(); ++i) {
            const Vec2& u = axes_src[i];
            const Vec2& v = axes_src[(i + 1) % axes_src.size()];
            Vec2 n = {v.y - u.y, -(v.x - u.x)};
            double pmin = 1e30, pmax = -1e30, qmin = 1e30, qmax = -1e30;
            for (const auto& w : p) { double d = w.x * n.x + w.y * n.y; pmin = std::min(pmin, d); pmax = std::max(pmax, d); }
            for (const auto& w : q) { double d = w.x * n.x + w.y * n.y; qmin = std::min(qmin, d); qmax = std::max(qmax, d); }
            if (pmax <= qmin || qmax <= pmin) return true;
        }
        return false;
    };
    return !separated_on(va, va, vb) && !separated_on(vb, va, vb);
}

Vec3 CameraModel::to_cam(const Vec3& pw) const {
    Vec3 d = {pw[0] - pos[0], pw[1] - pos[1], pw[2] - pos[2]};
    return mat_apply(R_wc, d);
}

Vec3 CameraModel::to_world(const Vec3& pc) const {
    // R_wc^T * pc + pos
    return {R_wc[0] * pc[0] + R_wc[3] * pc[1] + R_wc[6] * pc[2] + pos[0],
            R_wc[1] * pc[0] + R_wc[4] * pc[1] + R_wc[7] * pc[2] + pos[1],
            R_wc[2] * pc[0] + R_wc[5] * pc[1] + R_wc[8] * pc[2] + pos[2]};
}

Vec2 CameraModel::project(const Vec3& pw) const {
    Vec3 pc = to_cam(pw);
    return {K.fx * pc[0] / pc[2] + K.cx, K.fy * pc[1] / pc[2] + K.cy};
}

CameraModel SimConfig::camera() const {
    CameraModel cam;
    double tilt = cam_tilt_deg * kPi / 180.0;
    cam.pos = {0.0, -cam_distance * std::cos(tilt), cam_distance * std::sin(tilt)};
    Vec3 target = {0, 0, 0};
    Vec3 f = {target[0] - cam.pos[0], target[1] - cam.pos[1], target[2] - cam.pos[2]};
    double fn = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
    for (auto& v : f) v /= fn;
    Vec3 up = {0, 0, 1};
    Vec3 right = {f[1] * up[2] - f[2] * up[1], f[2] * up[0] - f[0] * up[2], f[0] * up[1] - f[1] * up[0]};
    double rn = std::sqrt(right[0] * right[0] + right[1] * right[1] + right[2] * right[2]);
    for (auto& v : right) v /= rn;
    Vec3 down = {f[1] * right[2] - f[2] * right[1], f[2] * right[0] - f[0] * right[2],
                 f[0] * right[1] - f[1] * right[0]};
    cam.R_wc = {right[0], right[1], right[2], down[0], down[1], down[2], f[0], f[1], f[2]};
    cam.K = {focal, focal, W / 2.0, H / 2.0};
    return cam;
}

SceneState make_scene(const SimConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ncount(cfg.min_objects, cfg.max_objects);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    static const std::vector<Vec3> palette = {
        {0.85, 0.15, 0.15}, {0.15, 0.35, 0.85}, {0.15, 0.7, 0.2}, {0.9, 0.75, 0.1},
        {0.7, 0.2, 0.75}, {0.95, 0.5, 0.1}, {0.1, 0.7, 0.7}};

    SceneState s;
    s.arena_half_x = cfg.arena_half_x;
    s.arena_half_y = cfg.arena_half_y;
    int n = ncount(rng);
    for (int i = 0; i < n; ++i) {
        ObjectState o;
        o.id = i;
        int kind = static_cast<int>(uni(rng) * 3.0);
        double size = 0.032 + 0.016 * uni(rng);
        if (kind == 0) {
            o.shape.kind = ShapeSpec::Kind::Disc;
            o.shape.radius = size;
        } else if (kind == 1) {
            o.shape.kind = ShapeSpec::Kind::Poly;  // square
            o.shape.verts = {{-size, -size}, {size, -size}, {size, size}, {-size, size}};
        } else {
            o.shape.kind = ShapeSpec::Kind::Poly;  // triangle
            double r = size * 1.25;
            o.shape.verts.clear();
            for (int k = 0; k < 3; ++k) {
                double a = kPi / 2 + 2.0 * kPi * k / 3.0;
                o.shape.verts.push_back({r * std::cos(a), r * std::sin(a)});
            }
        }
        o.shape.height = 0.035 + 0.025 * uni(rng);
        o.color = palette[static_cast<std::size_t>(uni(rng) * palette.size()) % palette.size()];
        o.yaw = uni(rng) * 2.0 * kPi;

        double rb = o.shape.bound_radius();
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            o.pos.x = (uni(rng) * 2.0 - 1.0) * (s.arena_half_x - rb - 0.01);
            o.pos.y = (uni(rng) * 2.0 - 1.0) * (s.arena_half_y - rb - 0.01);
            placed = true;
            for (const auto& other : s.objects) {
                double gap = std::hypot(o.pos.x - other.pos.x, o.pos.y - other.pos.y) -
                             rb - other.shape.bound_radius();
                if (gap < 0.01) { placed = false; break; }
            }
        }
        if (!placed)
            throw std::runtime_error("make_scene: placement infeasible after 1000 tries (" +
                                     std::to_string(n) + " objects in arena)");
        s.objects.push_back(std::move(o));
    }
    return s;
}

namespace {

void clamp_to_arena(ObjectState& o, const SceneState& s) {
    double rb = o.shape.bound_radius();
    o.pos.x = std::clamp(o.pos.x, -s.arena_half_x + rb, s.arena_half_x - rb);
    o.pos.y = std::clamp(o.pos.y, -s.arena_half_y + rb, s.arena_half_y - rb);
}

/// Smallest forward translation t >= 0 of the object along u that clears the
/// poker disc at q.
double clearing_push(const ObjectState& o, const Vec2& q, const Vec2& u, double poker_r) {
    auto clearance = [&](double t) {
        ObjectState m = o;
        m.pos.x += t * u.x;
        m.pos.y += t * u.y;
        return footprint_signed_distance(m, q) - poker_r;
    };
    if (clearance(0.0) >= 0.0) return 0.0;
    double hi = 0.01;
    int guard = 0;
    while (clearance(hi) < 0.0 && guard++ < 40) hi *= 1.6;
    double lo = 0.0;
    for (int i = 0; i < 48; ++i) {
        double mid = 0.5 * (lo + hi);
        if (clearance(mid) < 0.0) lo = mid; else hi = mid;
    }
    return hi;
}

/// Chained contact: overlapping bounding discs are separated by moving the
/// object further along the push direction; iterated to a fixed point.
void resolve_object_contacts(SceneState& s, const Vec2& u, const SimConfig& cfg) {
    for (int iter = 0; iter < cfg.contact_max_iter; ++iter) {
        bool moved = false;
        for (std::size_t i = 0; i < s.objects.size(); ++i)
            for (std::size_t j = i + 1; j < s.objects.size(); ++j) {
                ObjectState& a = s.objects[i];
                ObjectState& b = s.objects[j];
                double ra = a.shape.bound_radius(), rb = b.shape.bound_radius();
                double d = std::hypot(a.pos.x - b.pos.x, a.pos.y - b.pos.y);
                if (d >= ra + rb) continue;
                double along_a = a.pos.x * u.x + a.pos.y * u.y;
                double along_b = b.pos.x * u.x + b.pos.y * u.y;
                ObjectState& mover = along_a > along_b ? a : b;
                const ObjectState& anchor = along_a > along_b ? b : a;
                double push = ra + rb - d + 1e-5;
                Vec2 dir;
                if (d > 1e-9)
                    dir = {(mover.pos.x - anchor.pos.x) / d, (mover.pos.y - anchor.pos.y) / d};
                else
                    dir = u;
                mover.pos.x += push * dir.x;
                mover.pos.y += push * dir.y;
                clamp_to_arena(mover, s);
                moved = true;
            }
        if (!moved) return;
    }
    // still overlapping after clamping against the walls
    for (std::size_t i = 0; i < s.objects.size(); ++i)
        for (std::size_t j = i + 1; j < s.objects.size(); ++j) {
            double d = std::hypot(s.objects[i].pos.x - s.objects[j].pos.x,
                                  s.objects[i].pos.y - s.objects[j].pos.y);
            if (d < s.objects[i].shape.bound_radius() + s.objects[j].shape.bound_radius() - 1e-6)
                throw std::runtime_error("apply_poke: contact resolution did not converge");
        }
}

}  // namespace

SceneState apply_poke(const SceneState& s, const PokeAction& u_in, const SimConfig& cfg) {
    if (std::fabs(u_in.ax) > s.arena_half_x || std::fabs(u_in.ay) > s.arena_half_y)
        throw std::invalid_argument("apply_poke: target outside arena");
    SceneState out = s;
    Vec2 u = {std::cos(u_in.atheta), std::sin(u_in.atheta)};
    Vec2 end = {u_in.ax, u_in.ay};
    Vec2 start = {end.x - cfg.stroke_len * u.x, end.y - cfg.stroke_len * u.y};

    for (int step = 1; step <= cfg.push_substeps; ++step) {
        double f = static_cast<double>(step) / cfg.push_substeps;
        Vec2 q = {start.x + f * (end.x - start.x), start.y + f * (end.y - start.y)};
        for (auto& o : out.objects) {
            double t = clearing_push(o, q, u, cfg.poker_radius);
            if (t <= 0.0) continue;
            Vec2 co = {o.pos.x - q.x, o.pos.y - q.y};
            double lever = cross2(u, co);
            double r_eff = std::max(o.shape.bound_radius(), 0.02);
            lever = std::clamp(lever, -r_eff, r_eff);
            o.pos.x += t * u.x;
            o.pos.y += t * u.y;
            o.yaw += -cfg.yaw_gain * t * lever / (r_eff * r_eff);
            clamp_to_arena(o, out);
            resolve_object_contacts(out, u, cfg);
        }
    }
    return out;
}

RenderResult render(const SceneState& s, const SimConfig& cfg) {
    CameraModel cam = cfg.camera();
    RenderResult r;
    r.cloud.init(cfg.H, cfg.W);
    r.image.init(cfg.H, cfg.W);
    r.mask_ids.assign(r.cloud.npix(), -1);
    r.world_pts.assign(r.cloud.npix() * 3, 0.0);

    const Vec3 light = []{
        Vec3 l = {0.35, -0.25, 1.0};
        double n = std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
        return Vec3{l[0] / n, l[1] / n, l[2] / n};
    }();

    // ray / prism intersection; returns camera-depth t (along the
    // unnormalized camera-frame ray) or infinity
    auto hit_object = [&](const ObjectState& o, const Vec3& orig, const Vec3& dir,
                          Vec3* normal) -> double {
        double best = 1e30;
        Vec3 bestn = {0, 0, 1};
        double h = o.shape.height;
        // top face
        if (std::fabs(dir[2]) > 1e-12) {
            double t = (h - orig[2]) / dir[2];
            if (t > 1e-6) {
                Vec2 p = {orig[0] + t * dir[0], orig[1] + t * dir[1]};
                if (footprint_signed_distance(o, p) <= 0.0 && t < best) {
                    best = t;
                    bestn = {0, 0, 1};
                }
            }
        }
        // sides
        if (o.shape.kind == ShapeSpec::Kind::Disc) {
            double ox = orig[0] - o.pos.x, oy = orig[1] - o.pos.y;
            double a = dir[0] * dir[0] + dir[1] * dir[1];
            double b = 2.0 * (ox * dir[0] + oy * dir[1]);
            double c = ox * ox + oy * oy - o.shape.radius * o.shape.radius;
            double disc = b * b - 4 * a * c;
            if (disc > 0 && a > 1e-12) {
                double sq = std::sqrt(disc);
                for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
                    if (t <= 1e-6 || t >= best) continue;
                    double z = orig[2] + t * dir[2];
                    if (z < 0.0 || z > h) continue;
                    best = t;
                    double nx = ox + t * dir[0], ny = oy + t * dir[1];
                    double nn = std::hypot(nx, ny);
                    bestn = {nx / nn, ny / nn, 0};
                    break;
                }
            }
        } else {
            auto vs = world_verts(o);
            for (std::size_t i = 0; i < vs.size(); ++i) {
                const Vec2& a = vs[i];
                const Vec2& b = vs[(i + 1) % vs.size()];
                Vec2 e = {b.x - a.x, b.y - a.y};
                double el = norm2(e);
                Vec2 n = {e.y / el, -e.x / el};
                double denom = dir[0] * n.x + dir[1] * n.y;
                if (std::fabs(denom) < 1e-12) continue;
                double t = -((orig[0] - a.x) * n.x + (orig[1] - a.y) * n.y) / denom;
                if (t <= 1e-6 || t >= best) continue;
                double z = orig[2] + t * dir[2];
                if (z < 0.0 || z > h) continue;
                Vec2 p = {orig[0] + t * dir[0], orig[1] + t * dir[1]};
                double along = ((p.x - a.x) * e.x + (p.y - a.y) * e.y) / (el * el);
                if (along < 0.0 || along > 1.0) continue;
                best = t;
                bestn = {n.x, n.y, 0};
            }
        }
        if (normal) *normal = bestn;
        return best;
    };

    auto occluded = [&](const Vec3& p) {
        for (const auto& o : s.objects) {
            Vec3 n;
            double t = hit_object(o, {p[0] + 1e-5 * light[0], p[1] + 1e-5 * light[1],
                                      p[2] + 1e-5 * light[2]}, light, &n);
            if (t < 1e29) return true;
        }
        return false;
    };

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int y = 0; y < cfg.H; ++y) {
        for (int x = 0; x < cfg.W; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * cfg.W + x;
            Vec3 dir_cam = {(x - cam.K.cx) / cam.K.fx, (y - cam.K.cy) / cam.K.fy, 1.0};
            Vec3 dir = cam.to_world({dir_cam[0], dir_cam[1], dir_cam[2]});
            dir = {dir[0] - cam.pos[0], dir[1] - cam.pos[1], dir[2] - cam.pos[2]};

            double best = 1e30;
            int best_id = -1;
            Vec3 bestn = {0, 0, 1};
            for (const auto& o : s.objects) {
                Vec3 n;
                double t = hit_object(o, cam.pos, dir, &n);
                if (t < best) { best = t; best_id = o.id; bestn = n; }
            }
            if (dir[2] < -1e-12) {
                double t = -cam.pos[2] / dir[2];
                if (t > 1e-6 && t < best) { best = t; best_id = -1; bestn = {0, 0, 1}; }
            }
            if (best >= 1e29) continue;  // invalid pixel: ray escapes the scene

            Vec3 pw = {cam.pos[0] + best * dir[0], cam.pos[1] + best * dir[1],
                       cam.pos[2] + best * dir[2]};
            // camera-frame point: dir_cam has unit z, so depth Z = best
            r.cloud.pts[p * 3 + 0] = dir_cam[0] * best;
            r.cloud.pts[p * 3 + 1] = dir_cam[1] * best;
            r.cloud.pts[p * 3 + 2] = best;
            r.cloud.valid[p] = 1;
            r.mask_ids[p] = best_id;
            r.world_pts[p * 3 + 0] = pw[0];
            r.world_pts[p * 3 + 1] = pw[1];
            r.world_pts[p * 3 + 2] = pw[2];

            Vec3 base = best_id < 0 ? Vec3{0.82, 0.80, 0.78} : s.objects[best_id].color;
            double diffuse = std::max(0.0, bestn[0] * light[0] + bestn[1] * light[1] + bestn[2] * light[2]);
            double shade = 0.72 + 0.28 * diffuse;
            if (cfg.shadow_strength > 0.0 && occluded(pw)) shade *= (1.0 - cfg.shadow_strength);
            for (int c = 0; c < 3; ++c)
                r.image.rgb[p * 3 + c] = std::clamp(base[c] * shade, 0.0, 1.0);
        }
    }
    return r;
}

std::vector<double> gt_scene_flow(const SceneState& before, const SceneState& after,
                                  const RenderResult& render_before, const SimConfig& cfg) {
    if (before.objects.size() != after.objects.size())
        throw std::invalid_argument("gt_scene_flow: object sets differ");
    CameraModel cam = cfg.camera();
    std::size_t npix = render_before.cloud.npix();
    std::vector<double> flow(npix * 3, 0.0);
    for (std::size_t p = 0; p < npix; ++p) {
        int id = render_before.mask_ids[p];
        if (id < 0 || !render_before.cloud.valid[p]) continue;
        const ObjectState& ob = before.objects[id];
        const ObjectState& oa = after.objects[id];
        Vec3 pw = {render_before.world_pts[p * 3], render_before.world_pts[p * 3 + 1],
                   render_before.world_pts[p * 3 + 2]};
        Vec2 local = rot2({pw[0] - ob.pos.x, pw[1] - ob.pos.y}, -ob.yaw);
        Vec2 moved = rot2(local, oa.yaw);
        Vec3 pw2 = {moved.x + oa.pos.x, moved.y + oa.pos.y, pw[2]};
        Vec3 d = {pw2[0] - pw[0], pw2[1] - pw[1], pw2[2] - pw[2]};
        Vec3 dc = mat_apply(cam.R_wc, d);
        flow[p * 3] = dc[0];
        flow[p * 3 + 1] = dc[1];
        flow[p * 3 + 2] = dc[2];
    }
    return flow;
}

void add_depth_noise(Cloud& P, const SimConfig& cfg, std::mt19937_64& rng) {
    if (cfg.depth_noise_sd <= 0.0) return;
    CameraModel cam = cfg.camera();
    double z_ref = cam.pos[2];
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t p = 0; p < P.npix(); ++p) {
        if (!P.valid[p]) continue;
        double Z = P.pts[p * 3 + 2];
        double n = gauss(rng) * cfg.depth_noise_sd * (Z / z_ref);
        double scale = (Z + n) / Z;  // point stays on its pinhole ray
        P.pts[p * 3] *= scale;
        P.pts[p * 3 + 1] *= scale;
        P.pts[p * 3 + 2] *= scale;
    }
}

void corrupt_associations(std::vector<double>& corr, const std::vector<uint8_t>& corr_valid,
                          const Cloud& P_after, int H, int W, int window,
                          double depth_threshold, std::mt19937_64& rng) {
    if (window % 2 == 0) throw std::invalid_argument("corrupt_associations: window must be odd");
    if (window == 1) return;
    int half = window / 2;
    std::uniform_int_distribution<int> off(-half, half);
    for (std::size_t p = 0; p < corr_valid.size(); ++p) {
        if (!corr_valid[p]) continue;
        int tx = static_cast<int>(std::lround(corr[p * 2]));
        int ty = static_cast<int>(std::lround(corr[p * 2 + 1]));
        tx = std::clamp(tx, 0, W - 1);
        ty = std::clamp(ty, 0, H - 1);
        double z0 = P_after.pts[(static_cast<std::size_t>(ty) * W + tx) * 3 + 2];
        for (int attempt = 0; attempt < 32; ++attempt) {
            int nx = tx + off(rng), ny = ty + off(rng);
            if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
            std::size_t q = static_cast<std::size_t>(ny) * W + nx;
            if (!P_after.valid[q]) continue;
            if (std::fabs(P_after.pts[q * 3 + 2] - z0) > depth_threshold) continue;
            corr[p * 2] = nx;
            corr[p * 2 + 1] = ny;
            break;
        }
    }
}

int grid_cell_of(const Vec2& p, const SimConfig& cfg) {
    double fx = (p.x + cfg.arena_half_x) / (2.0 * cfg.arena_half_x);
    double fy = (p.y + cfg.arena_half_y) / (2.0 * cfg.arena_half_y);
    if (fx < 0.0 || fx >= 1.0 || fy < 0.0 || fy >= 1.0) return -1;
    int cx = static_cast<int>(fx * cfg.grid);
    int cy = static_cast<int>(fy * cfg.grid);
    return cy * cfg.grid + cx;
}

Vec2 grid_cell_center(int cell, const SimConfig& cfg) {
    int cy = cell / cfg.grid, cx = cell % cfg.grid;
    return {-cfg.arena_half_x + (cx + 0.5) * 2.0 * cfg.arena_half_x / cfg.grid,
            -cfg.arena_half_y + (cy + 0.5) * 2.0 * cfg.arena_half_y / cfg.grid};
}

std::vector<uint8_t> occupancy_grid(const RenderResult& scene_render,
                                    const RenderResult& empty_render, const SimConfig& cfg) {
    std::vector<uint8_t> occ(static_cast<std::size_t>(cfg.grid) * cfg.grid, 0);
    for (std::size_t p = 0; p < scene_render.cloud.npix(); ++p) {
        if (!scene_render.cloud.valid[p] || !empty_render.cloud.valid[p]) continue;
        double dz = empty_render.cloud.pts[p * 3 + 2] - scene_render.cloud.pts[p * 3 + 2];
        if (std::fabs(dz) <= cfg.tau_occ) continue;
        Vec2 w = {scene_render.world_pts[p * 3], scene_render.world_pts[p * 3 + 1]};
        int cell = grid_cell_of(w, cfg);
        if (cell >= 0) occ[cell] = 1;
    }
    return occ;
}

PokeSample sample_random_poke(const SceneState& s, const RenderResult& scene_render,
                              const RenderResult& empty_render, const SimConfig& cfg,
                              std::mt19937_64& rng) {
    auto occ = occupancy_grid(scene_render, empty_render, cfg);
    std::vector<int> occupied, free_cells;
    for (std::size_t i = 0; i < occ.size(); ++i)
        (occ[i] ? occupied : free_cells).push_back(static_cast<int>(i));
    if (occupied.empty())
        throw std::runtime_error("sample_random_poke: no occupied cell (empty scene)");
    if (free_cells.empty())
        throw std::runtime_error("sample_random_poke: no free cell");
    std::uniform_int_distribution<std::size_t> pick_occ(0, occupied.size() - 1);
    PokeSample ps;
    ps.end_cell = occupied[pick_occ(rng)];
    // The poker's stroke has fixed length, so the start cell is the free
    // cell holding the point one stroke length from the target along a
    // random approach direction: the recorded start then matches where the
    // pusher physically enters the scene. A start sampled uniformly over
    // all free space would be unrecoverable from observation (any free cell
    // along the approach ray yields the identical poke).
    Vec2 tc = grid_cell_center(ps.end_cell, cfg);
    std::vector<uint8_t> is_free(occ.size(), 0);
    for (int c : free_cells) is_free[static_cast<std::size_t>(c)] = 1;
    std::uniform_real_distribution<double> uangle(0.0, 2.0 * kPi);
    ps.start_cell = -1;
    for (int attempt = 0; attempt < 64 && ps.start_cell < 0; ++attempt) {
        double phi = uangle(rng);
        Vec2 p = {tc.x - cfg.stroke_len * std::cos(phi), tc.y - cfg.stroke_len * std::sin(phi)};
        int c = grid_cell_of(p, cfg);
        if (c >= 0 && is_free[static_cast<std::size_t>(c)]) ps.start_cell = c;
    }
    if (ps.start_cell < 0) {  // crowded target: fall back to any free cell
        std::uniform_int_distribution<std::size_t> pick_free(0, free_cells.size() - 1);
        ps.start_cell = free_cells[pick_free(rng)];
    }
    Vec2 t = tc;
    Vec2 st = grid_cell_center(ps.start_cell, cfg);
    double theta = std::atan2(t.y - st.y, t.x - st.x);
    if (theta < 0) theta += 2.0 * kPi;
    ps.action = {t.x, t.y, theta};
    (void)s;
    return ps;
}

EpisodeRecord generate_episode(const SceneState& s, const RenderResult& empty_render,
                               const SimConfig& cfg, std::mt19937_64& rng,
                               SceneState* after_out) {
    RenderResult before = render(s, cfg);
    PokeSample ps = sample_random_poke(s, before, empty_render, cfg, rng);
    SceneState after = apply_poke(s, ps.action, cfg);
    RenderResult after_r = render(after, cfg);

    EpisodeRecord ep;
    ep.P_t = before.cloud;
    ep.I_t = before.image;
    ep.P_t1 = after_r.cloud;
    ep.I_t1 = after_r.image;
    ep.action = ps.action;
    ep.gt_start_cell = ps.start_cell;
    ep.gt_end_cell = ps.end_cell;
    ep.gt_mask_ids = before.mask_ids;
    ep.gt_flow = gt_scene_flow(s, after, before, cfg);

    // continuous after-frame correspondence of each before pixel
    CameraModel cam = cfg.camera();
    std::size_t npix = before.cloud.npix();
    ep.gt_corr.assign(npix * 2, 0.0);
    ep.corr_valid.assign(npix, 0);
    for (std::size_t p = 0; p < npix; ++p) {
        if (!before.cloud.valid[p]) continue;
        // world-space route: move the surface point with its object's pose
        // delta and project; independent of the camera-frame flow composition
        Vec3 pw = {before.world_pts[p * 3], before.world_pts[p * 3 + 1],
                   before.world_pts[p * 3 + 2]};
        Vec3 pw2 = pw;
        int id = before.mask_ids[p];
        if (id >= 0) {
            const ObjectState& ob = s.objects[id];
            const ObjectState& oa = after.objects[id];
            Vec2 local = {pw[0] - ob.pos.x, pw[1] - ob.pos.y};
            double c = std::cos(oa.yaw - ob.yaw), sn = std::sin(oa.yaw - ob.yaw);
            pw2 = {c * local.x - sn * local.y + oa.pos.x,
                   sn * local.x + c * local.y + oa.pos.y, pw[2]};
        }
        Vec2 px = cam.project(pw2);
        ep.gt_corr[p * 2] = px.x;
        ep.gt_corr[p * 2 + 1] = px.y;
        int rx = static_cast<int>(std::lround(px.x)), ry = static_cast<int>(std::lround(px.y));
        if (rx < 0 || rx >= cfg.W || ry < 0 || ry >= cfg.H) continue;
        int after_id = after_r.mask_ids[static_cast<std::size_t>(ry) * cfg.W + rx];
        // drop pixels whose moved point is occluded in the after frame
        if (after_id == before.mask_ids[p]) ep.corr_valid[p] = 1;
    }

    if (cfg.depth_noise_sd > 0.0) {
        add_depth_noise(ep.P_t, cfg, rng);
        add_depth_noise(ep.P_t1, cfg, rng);
    }
    if (after_out) *after_out = after;
    return ep;
}

}  // namespace pokedyn
