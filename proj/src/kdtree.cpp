#include "pokedyn/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pokedyn {

namespace {
inline double dist2(const Vec3& a, const Vec3& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}
constexpr int kLeafSize = 16;
}  // namespace

void KdTree3::build(const std::vector<Vec3>& pts) {
    pts_ = pts;
    order_.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) order_[i] = static_cast<int>(i);
    nodes_.clear();
    nodes_.reserve(pts.size() / kLeafSize * 2 + 4);
    root_ = pts.empty() ? -1 : build_range(0, static_cast<int>(pts.size()));
}

int KdTree3::build_range(int begin, int end) {
    int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    // split on the widest axis at the median
    Vec3 lo = pts_[order_[begin]], hi = lo;
    for (int i = begin; i < end; ++i)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], pts_[order_[i]][a]);
            hi[a] = std::max(hi[a], pts_[order_[i]][a]);
        }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
    nodes_[id].axis = axis;
    nodes_[id].split = pts_[order_[mid]][axis];
    int l = build_range(begin, mid);
    int r = build_range(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
}

void KdTree3::search(int node, const Vec3& q, std::size_t& best, double& best_d2) const {
    const Node& n = nodes_[node];
    if (n.axis < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            std::size_t idx = static_cast<std::size_t>(order_[i]);
            double d2 = dist2(pts_[idx], q);
            if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                best_d2 = d2;
                best = idx;
            }
        }
        return;
    }
    double d = q[n.axis] - n.split;
    int near = d < 0 ? n.left : n.right;
    int far = d < 0 ? n.right : n.left;
    search(near, q, best, best_d2);
    if (d * d <= best_d2) search(far, q, best, best_d2);
}

std::size_t KdTree3::nearest(const Vec3& q, double* d2_out) const {
    if (root_ < 0) throw std::logic_error("KdTree3::nearest on empty tree");
    std::size_t best = pts_.size();
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    if (d2_out) *d2_out = best_d2;
    return best;
}

std::size_t nearest_bruteforce(const std::vector<Vec3>& pts, const Vec3& q, double* d2_out) {
    if (pts.empty()) throw std::logic_error("nearest_bruteforce on empty set");
    std::size_t best = 0;
    double best_d2 = dist2(pts[0], q);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        double d2 = dist2(pts[i], q);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    if (d2_out) *d2_out = best_d2;
    return best;
}

}  // namespace pokedyn
