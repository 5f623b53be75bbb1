#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "meibo/error.hpp"
#include "meibo/morphometry.hpp"

namespace meibo::morph {

namespace {

constexpr int kDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};  // N, NE, E, SE, S, SW, W, NW
constexpr int kDy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

/// Binary crop of a pixel set with a one-pixel empty border.
struct Crop {
    int x0 = 0;
    int y0 = 0;
    BinaryImage image;
};

Crop crop(const PixelSet& pixels) {
    Eigen::Vector2i lo = pixels.front(), hi = pixels.front();
    for (const Pixel& p : pixels) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    Crop c;
    c.x0 = lo.x() - 1;
    c.y0 = lo.y() - 1;
    c.image = BinaryImage::Zero(hi.y() - lo.y() + 3, hi.x() - lo.x() + 3);
    for (const Pixel& p : pixels) c.image(p.y() - c.y0, p.x() - c.x0) = 1;
    return c;
}

void zhang_suen(BinaryImage& img) {
    std::vector<std::pair<int, int>> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int step = 0; step < 2; ++step) {
            marked.clear();
            for (int y = 1; y + 1 < img.rows(); ++y) {
                for (int x = 1; x + 1 < img.cols(); ++x) {
                    if (!img(y, x)) continue;
                    int p[8];
                    int b = 0;
                    for (int k = 0; k < 8; ++k) {
                        p[k] = img(y + kDy[k], x + kDx[k]) ? 1 : 0;
                        b += p[k];
                    }
                    if (b < 2 || b > 6) continue;
                    int a = 0;
                    for (int k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
                    if (a != 1) continue;
                    // p[0]=P2(N) p[2]=P4(E) p[4]=P6(S) p[6]=P8(W)
                    const bool keep = step == 0 ? (p[0] && p[2] && p[4]) || (p[2] && p[4] && p[6])
                                                : (p[0] && p[2] && p[6]) || (p[0] && p[4] && p[6]);
                    if (!keep) marked.emplace_back(y, x);
                }
            }
            for (auto [y, x] : marked) img(y, x) = 0;
            if (!marked.empty()) changed = true;
        }
    }
}

struct Graph {
    std::vector<Pixel> nodes;                               // crop coordinates
    std::vector<std::vector<std::pair<int, double>>> adj;   // (neighbour, cost)
};

Graph build_graph(const BinaryImage& skel) {
    Graph g;
    std::vector<int> index(static_cast<std::size_t>(skel.size()), -1);
    for (int y = 0; y < skel.rows(); ++y)
        for (int x = 0; x < skel.cols(); ++x)
            if (skel(y, x)) {
                index[static_cast<std::size_t>(y * skel.cols() + x)] = static_cast<int>(g.nodes.size());
                g.nodes.emplace_back(x, y);
            }
    g.adj.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const Pixel& p = g.nodes[i];
        for (int k = 0; k < 8; ++k) {
            const int nx = p.x() + kDx[k], ny = p.y() + kDy[k];
            if (!in_bounds(skel, nx, ny) || !skel(ny, nx)) continue;
            const int j = index[static_cast<std::size_t>(ny * skel.cols() + nx)];
            g.adj[i].emplace_back(j, (k % 2 == 0) ? 1.0 : std::numbers::sqrt2);
        }
    }
    return g;
}

struct Sweep {
    std::vector<double> dist;
    std::vector<int> pred;
    int farthest = -1;
};

Sweep dijkstra(const Graph& g, int source) {
    const double inf = std::numeric_limits<double>::infinity();
    Sweep s{std::vector<double>(g.nodes.size(), inf), std::vector<int>(g.nodes.size(), -1), source};
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    s.dist[source] = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
        auto [d, u] = queue.top();
        queue.pop();
        if (d > s.dist[u]) continue;
        for (auto [v, w] : g.adj[u]) {
            if (d + w < s.dist[v]) {
                s.dist[v] = d + w;
                s.pred[v] = u;
                queue.emplace(s.dist[v], v);
            }
        }
    }
    for (std::size_t i = 0; i < s.dist.size(); ++i) {
        if (s.dist[i] != inf && s.dist[i] > s.dist[s.farthest]) s.farthest = static_cast<int>(i);
    }
    return s;
}

bool occupied(const BinaryImage& img, const Eigen::Vector2d& pos) {
    const int x = static_cast<int>(std::floor(pos.x() + 0.5));
    const int y = static_cast<int>(std::floor(pos.y() + 0.5));
    return in_bounds(img, x, y) && img(y, x);
}

/// Distance from `tip` along `dir` to the first point leaving the gland, in
/// 1/16 px steps. Pixel centres sit at integer coordinates.
double march_to_boundary(const BinaryImage& gland, const Eigen::Vector2d& tip, const Eigen::Vector2d& dir) {
    constexpr double kStep = 1.0 / 16.0;
    double t = 0.0;
    while (occupied(gland, tip + (t + kStep) * dir)) t += kStep;
    return t;
}

void extend_ends(SkeletonPath& path, const BinaryImage& gland, const Eigen::Vector2d& origin) {
    const auto n = static_cast<int>(path.pixels.size());
    path.start = path.pixels.front().cast<double>();
    path.end = path.pixels.back().cast<double>();
    if (n >= 2) {
        const int k = std::min(n - 1, kEndTangentPx);
        const Eigen::Vector2d head = path.pixels.front().cast<double>();
        const Eigen::Vector2d tail = path.pixels.back().cast<double>();
        const Eigen::Vector2d head_dir = (head - path.pixels[k].cast<double>()).normalized();
        const Eigen::Vector2d tail_dir = (tail - path.pixels[n - 1 - k].cast<double>()).normalized();
        path.start_extension_px = march_to_boundary(gland, head - origin, head_dir);
        path.end_extension_px = march_to_boundary(gland, tail - origin, tail_dir);
        path.start = head + path.start_extension_px * head_dir;
        path.end = tail + path.end_extension_px * tail_dir;
    }
    path.length_px = path.arc_px + path.start_extension_px + path.end_extension_px;
}

}  // namespace

SkeletonPath skeletonize(const PixelSet& gland) {
    if (gland.empty()) throw Error("empty_gland", "empty pixel set");

    Crop c = crop(gland);
    const BinaryImage filled = c.image;
    zhang_suen(c.image);

    if ((c.image == 0).all()) {
        // Thinning erases 2x2 blocks entirely; keep the pixel nearest the centroid.
        Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
        for (const Pixel& p : gland) centroid += p.cast<double>();
        centroid /= static_cast<double>(gland.size());
        const Pixel* best = &gland.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (const Pixel& p : gland) {
            const double d = (p.cast<double>() - centroid).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = &p;
            }
        }
        SkeletonPath single;
        single.pixels = {*best};
        single.start = single.end = best->cast<double>();
        return single;
    }

    const Graph g = build_graph(c.image);
    std::vector<int> component(g.nodes.size(), -1);
    double best_len = -1.0;
    std::vector<int> best_path;

    for (std::size_t seed = 0; seed < g.nodes.size(); ++seed) {
        if (component[seed] != -1) continue;
        Sweep first = dijkstra(g, static_cast<int>(seed));
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (std::isfinite(first.dist[i])) component[i] = static_cast<int>(seed);

        // Repeated double sweep; exact on trees, near-exact on thinned skeletons.
        Sweep sweep = dijkstra(g, first.farthest);
        double len = sweep.dist[sweep.farthest];
        for (int iter = 0; iter < 4; ++iter) {
            Sweep next = dijkstra(g, sweep.farthest);
            if (next.dist[next.farthest] <= len) break;
            len = next.dist[next.farthest];
            sweep = std::move(next);
        }
        if (len > best_len) {
            best_len = len;
            best_path.clear();
            for (int v = sweep.farthest; v != -1; v = sweep.pred[v]) best_path.push_back(v);
        }
    }

    SkeletonPath out;
    out.pixels.reserve(best_path.size());
    for (auto it = best_path.rbegin(); it != best_path.rend(); ++it) {
        const Pixel& p = g.nodes[*it];
        out.pixels.emplace_back(p.x() + c.x0, p.y() + c.y0);
    }
    out.arc_px = path_length_px(out.pixels);
    extend_ends(out, filled, Eigen::Vector2d(c.x0, c.y0));
    return out;
}

double path_length_px(const std::vector<Pixel>& path) {
    const auto n = static_cast<int>(path.size());
    for (int i = 1; i < n; ++i) {
        if ((path[i] - path[i - 1]).cwiseAbs().maxCoeff() != 1) throw Error("broken_path", "path is not 8-connected");
    }
    // Symmetric moving average, shrinking at the ends so endpoints stay fixed.
    std::vector<Eigen::Vector2d> smooth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int h = std::min({kPathSmoothingHalfWindow, i, n - 1 - i});
        Eigen::Vector2d sum = Eigen::Vector2d::Zero();
        for (int j = i - h; j <= i + h; ++j) sum += path[j].cast<double>();
        smooth[i] = sum / static_cast<double>(2 * h + 1);
    }
    double total = 0.0;
    for (int i = 1; i < n; ++i) total += (smooth[i] - smooth[i - 1]).norm();
    return total;
}

double gland_length(const PixelSet& gland, double mm_per_px) {
    return skeletonize(gland).length_px * mm_per_px;
}

WidthEstimate gland_width(long area_px, double skeleton_length_px, double mm_per_px) {
    if (skeleton_length_px <= 0.0) return WidthEstimate{0.0, true};
    return WidthEstimate{(static_cast<double>(area_px) / skeleton_length_px) * mm_per_px, false};
}

double gland_tortuosity(const std::vector<Pixel>& path) {
    if (path.size() < 2) throw Error("degenerate_skeleton", "degenerate skeleton");
    const double chord = (path.back() - path.front()).cast<double>().norm();
    if (chord == 0.0) throw Error("degenerate_skeleton", "degenerate skeleton");
    return std::max(0.0, path_length_px(path) / chord - 1.0);
}

double gland_tortuosity(const SkeletonPath& skeleton) {
    const double chord = (skeleton.end - skeleton.start).norm();
    if (skeleton.pixels.size() < 2 || chord == 0.0) throw Error("degenerate_skeleton", "degenerate skeleton");
    return std::max(0.0, skeleton.length_px / chord - 1.0);
}

}  // namespace meibo::morph
