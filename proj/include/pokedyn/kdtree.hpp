#pragma once

#include <cstddef>
#include <vector>

#include "pokedyn/geometry.hpp"

namespace pokedyn {

/// Static 3-d tree over a point set. Nearest-neighbor ties are broken toward
/// the lowest point index so results match the brute-force reference exactly.
class KdTree3 {
public:
    void build(const std::vector<Vec3>& pts);
    bool empty() const { return pts_.empty(); }

    /// Returns index of the nearest point and its squared distance.
    std::size_t nearest(const Vec3& q, double* d2_out = nullptr) const;

private:
    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
    };

    int build_range(int begin, int end);
    void search(int node, const Vec3& q, std::size_t& best, double& best_d2) const;

    std::vector<Vec3> pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Brute-force nearest neighbor with the same tie-break rule; the serial
/// reference used by tests and the equivalence oracle.
std::size_t nearest_bruteforce(const std::vector<Vec3>& pts, const Vec3& q,
                               double* d2_out = nullptr);

}  // namespace pokedyn
