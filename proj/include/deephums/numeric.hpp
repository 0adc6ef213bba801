#pragma once

#include <Eigen/Core>
#include <cmath>

namespace deephums {

/// Compensated (2Sum) accumulator. Running error terms are tracked so the
/// final value is the correctly rounded true sum for any realistic number
/// of terms; two different orderings of the same set of addends therefore
/// produce the same double. Path-length sums rely on this: subdividing a
/// trajectory must not change its accumulated length by even an ulp.
class CompensatedSum {
public:
    void add(double x) {
        const double s = sum_ + x;
        const double bp = s - sum_;
        err_ += (sum_ - (s - bp)) + (x - bp);
        sum_ = s;
    }
    double value() const { return sum_ + err_; }

private:
    double sum_ = 0.0;
    double err_ = 0.0;
};

/// Euclidean distance between two 3D points with a fixed evaluation order,
/// so scaling both inputs by a power of two scales the result exactly.
inline double point_distance(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Linear interpolation between two joint matrices at parameter t in [0, 1].
/// t = 0.5 yields the exact midpoint used by the slow-motion augmentation;
/// the time-warping resampler reuses this so interpolated frames agree
/// bit-for-bit between the two code paths.
inline Eigen::MatrixX3d lerp_frames(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b, double t) {
    if (t == 0.0) return a;
    if (t == 1.0) return b;
    return a + t * (b - a);
}

}  // namespace deephums
