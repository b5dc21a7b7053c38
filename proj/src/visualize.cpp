#include "moblur/visualize.hpp"

#include <cmath>

namespace moblur {

namespace {

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = h - std::floor(h);  // wrap to [0,1)
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace

Image flow_to_color(const MotionField& field) {
    require(field.ux.allFinite() && field.uy.allFinite(), "flow_to_color: field must be finite");
    const Eigen::Index rows = field.rows(), cols = field.cols();
    const double maxmag = field.max_magnitude();
    Image out;
    for (int c = 0; c < 3; ++c) out.planes.emplace_back(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const double ux = field.ux(y, x), uy = field.uy(y, x);
            const double mag = std::sqrt(ux * ux + uy * uy);
            const double sat = maxmag > 0 ? mag / maxmag : 0.0;
            const double hue = (std::atan2(uy, ux) + M_PI) / (2.0 * M_PI);
            double r, g, b;
            hsv_to_rgb(hue, sat, 1.0, r, g, b);
            out.planes[0](y, x) = r;
            out.planes[1](y, x) = g;
            out.planes[2](y, x) = b;
        }
    return out;
}

Image flow_overlay(const Planed& gray, const MotionField& field, const Planed& mask) {
    require(gray.rows() == field.rows() && gray.cols() == field.cols() &&
                mask.rows() == field.rows() && mask.cols() == field.cols(),
            "flow_overlay: dims mismatch");
    const Image fc = flow_to_color(field);
    Image out;
    for (int c = 0; c < 3; ++c) {
        Planed p(gray.rows(), gray.cols());
        for (Eigen::Index y = 0; y < gray.rows(); ++y)
            for (Eigen::Index x = 0; x < gray.cols(); ++x) {
                const double g = std::clamp(gray(y, x), 0.0, 1.0);
                p(y, x) = mask(y, x) >= 0.5 ? 0.35 * g + 0.65 * fc.plane(c)(y, x) : g;
            }
        out.planes.push_back(std::move(p));
    }
    return out;
}

Image kernel_montage(const AffineParams& a, Eigen::Index rows, Eigen::Index cols, double c,
                     int T, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& locations,
                     int which) {
    require(!locations.empty(), "kernel_montage: no locations");
    std::vector<Planed> tiles;
    int ext = 1;
    for (const auto& [ly, lx] : locations) {
        require(ly >= 0 && ly < rows && lx >= 0 && lx < cols, "kernel_montage: location oob");
        Planed tile;
        if (which < 0) {
            tile = build_kernel(a, ly, lx, rows, cols, c, T).weights;
        } else {
            require(which < 6, "kernel_montage: derivative index in 0..5");
            tile = build_kernel_grad(a, ly, lx, rows, cols, c, T).dk[which];
        }
        ext = std::max<int>(ext, static_cast<int>(std::max(tile.rows(), tile.cols()) / 2));
        tiles.push_back(std::move(tile));
    }
    const int tile_dim = 2 * ext + 1;
    const int gap = 2;
    // lay locations out in a near-square grid, row-major in input order
    const int grid_cols = static_cast<int>(std::ceil(std::sqrt(double(tiles.size()))));
    const int grid_rows = static_cast<int>((tiles.size() + grid_cols - 1) / grid_cols);
    const Eigen::Index H = grid_rows * (tile_dim + gap) + gap;
    const Eigen::Index W = grid_cols * (tile_dim + gap) + gap;
    Image out;
    for (int ch = 0; ch < 3; ++ch) out.planes.push_back(Planed::Constant(H, W, 1.0));

    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const Planed& t = tiles[i];
        const double scale = std::max(t.abs().maxCoeff(), 1e-300);
        const int gy = static_cast<int>(i) / grid_cols, gx = static_cast<int>(i) % grid_cols;
        const Eigen::Index oy = gap + gy * (tile_dim + gap) + (tile_dim - t.rows()) / 2;
        const Eigen::Index ox = gap + gx * (tile_dim + gap) + (tile_dim - t.cols()) / 2;
        for (Eigen::Index y = 0; y < t.rows(); ++y)
            for (Eigen::Index x = 0; x < t.cols(); ++x) {
                const double v = t(y, x) / scale;
                double r, g, b;
                if (which < 0) {
                    r = g = b = 1.0 - v;  // dark kernel on white
                } else if (v >= 0) {
                    r = 1.0;
                    g = b = 1.0 - v;  // positive -> red
                } else {
                    b = 1.0;
                    r = g = 1.0 + v;  // negative -> blue
                }
                out.planes[0](oy + y, ox + x) = r;
                out.planes[1](oy + y, ox + x) = g;
                out.planes[2](oy + y, ox + x) = b;
            }
    }
    return out;
}

}  // namespace moblur
