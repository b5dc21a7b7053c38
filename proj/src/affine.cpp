#include "moblur/affine.hpp"

namespace moblur {

MotionField motion_field(const AffineParams& a, Eigen::Index rows, Eigen::Index cols) {
    require(rows > 0 && cols > 0, "motion_field: empty dims");
    MotionField f;
    f.ux.resize(rows, cols);
    f.uy.resize(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        const double py = centered_y(y, rows);
        for (Eigen::Index x = 0; x < cols; ++x) {
            const double px = centered_x(x, cols);
            const Vec2 u = a.displacement(px, py);
            f.ux(y, x) = u.x();
            f.uy(y, x) = u.y();
        }
    }
    return f;
}

double max_corner_displacement(const AffineParams& a, Eigen::Index rows, Eigen::Index cols) {
    double m = 0;
    for (Eigen::Index y : {Eigen::Index(0), rows - 1})
        for (Eigen::Index x : {Eigen::Index(0), cols - 1})
            m = std::max(m, a.displacement(centered_x(x, cols), centered_y(y, rows)).norm());
    return m;
}

}  // namespace moblur
