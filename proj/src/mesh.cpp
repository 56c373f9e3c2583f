#include "elastinv/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>

#include "elastinv/errors.hpp"

namespace elastinv {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normalized_angle(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    return a;
}

double orient(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// True if d lies strictly inside the circumcircle of the CCW triangle (a, b, c),
// with a relative margin so cocircular configurations are left alone.
bool in_circumcircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                     const Eigen::Vector2d& d) {
    const Eigen::Vector2d ad = a - d, bd = b - d, cd = c - d;
    const double det = (ad.squaredNorm()) * (bd.x() * cd.y() - cd.x() * bd.y()) -
                       (bd.squaredNorm()) * (ad.x() * cd.y() - cd.x() * ad.y()) +
                       (cd.squaredNorm()) * (ad.x() * bd.y() - bd.x() * ad.y());
    const double scale = ad.squaredNorm() * bd.norm() * cd.norm() + bd.squaredNorm() * ad.norm() * cd.norm() +
                         cd.squaredNorm() * ad.norm() * bd.norm();
    return det > 1e-10 * scale;
}

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

void make_ccw(const std::vector<Eigen::Vector2d>& nodes, std::array<int, 3>& t) {
    if (orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0) std::swap(t[1], t[2]);
}

// Lawson flips until every interior edge is locally Delaunay.
void delaunay_flip(const std::vector<Eigen::Vector2d>& nodes, std::vector<std::array<int, 3>>& tris) {
    for (int pass = 0; pass < 1000; ++pass) {
        std::map<EdgeKey, std::vector<int>> edge_tris;
        for (int t = 0; t < static_cast<int>(tris.size()); ++t)
            for (int k = 0; k < 3; ++k) edge_tris[edge_key(tris[t][k], tris[t][(k + 1) % 3])].push_back(t);

        std::vector<char> touched(tris.size(), 0);
        int flips = 0;
        for (const auto& [edge, owners] : edge_tris) {
            if (owners.size() != 2) continue;
            const int t1 = owners[0], t2 = owners[1];
            if (touched[t1] || touched[t2]) continue;
            const auto opposite = [&](int t) {
                for (int v : tris[t])
                    if (v != edge.first && v != edge.second) return v;
                return -1;
            };
            const int c = opposite(t1), d = opposite(t2);
            const auto& T = tris[t1];
            if (!in_circumcircle(nodes[T[0]], nodes[T[1]], nodes[T[2]], nodes[d])) continue;
            const int p = edge.first, q = edge.second;
            // Flip only convex quads: p and q on opposite sides of c-d.
            if (orient(nodes[c], nodes[d], nodes[p]) * orient(nodes[c], nodes[d], nodes[q]) >= 0.0) continue;
            std::array<int, 3> n1{c, p, d}, n2{c, d, q};
            make_ccw(nodes, n1);
            make_ccw(nodes, n2);
            tris[t1] = n1;
            tris[t2] = n2;
            touched[t1] = touched[t2] = 1;
            ++flips;
        }
        if (flips == 0) return;
    }
}

} // namespace

void BoundaryPartitionSpec::validate() const {
    const double width = end - begin;
    if (!std::isfinite(begin) || !std::isfinite(end) || !(width > 0.0) || !(width < kTwoPi))
        throw PartitionError("dirichlet arc must satisfy 0 < end - begin < 2*pi");
}

bool BoundaryPartitionSpec::contains(double angle) const {
    return normalized_angle(angle - begin) < end - begin;
}

Mesh::Mesh(std::vector<Eigen::Vector2d> nodes, std::vector<std::array<int, 3>> triangles,
           std::vector<BoundaryEdge> boundary_edges)
    : nodes_(std::move(nodes)), triangles_(std::move(triangles)), boundary_edges_(std::move(boundary_edges)) {
    for (const auto& t : triangles_)
        for (int v : t)
            if (v < 0 || v >= num_nodes()) throw ParameterError("triangle references node out of range");
    for (const auto& e : boundary_edges_)
        if (e.a < 0 || e.a >= num_nodes() || e.b < 0 || e.b >= num_nodes() || e.a == e.b)
            throw ParameterError("boundary edge references node out of range");
    index_boundary();
}

void Mesh::index_boundary() {
    dirichlet_flag_.assign(nodes_.size(), 0);
    std::vector<char> neumann_flag(nodes_.size(), 0);
    for (const auto& e : boundary_edges_) {
        auto& flag = e.tag == BoundaryTag::Dirichlet ? dirichlet_flag_ : neumann_flag;
        flag[e.a] = flag[e.b] = 1;
    }
    dirichlet_nodes_.clear();
    neumann_nodes_.clear();
    neumann_slot_.assign(nodes_.size(), -1);
    for (int i = 0; i < num_nodes(); ++i) {
        if (dirichlet_flag_[i]) dirichlet_nodes_.push_back(i);
        if (neumann_flag[i]) {
            neumann_slot_[i] = static_cast<int>(neumann_nodes_.size());
            neumann_nodes_.push_back(i);
        }
    }
}

double Mesh::signed_area(int element) const {
    const auto& t = triangles_[element];
    return 0.5 * orient(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
}

Eigen::Vector2d Mesh::centroid(int element) const {
    const auto& t = triangles_[element];
    return (nodes_[t[0]] + nodes_[t[1]] + nodes_[t[2]]) / 3.0;
}

double Mesh::total_area() const {
    double s = 0.0;
    for (int e = 0; e < num_elements(); ++e) s += area(e);
    return s;
}

double Mesh::max_edge_length() const {
    double m = 0.0;
    for (const auto& t : triangles_)
        for (int k = 0; k < 3; ++k) m = std::max(m, (nodes_[t[k]] - nodes_[t[(k + 1) % 3]]).norm());
    return m;
}

int Mesh::count_edges(BoundaryTag tag) const {
    return static_cast<int>(std::count_if(boundary_edges_.begin(), boundary_edges_.end(),
                                          [tag](const BoundaryEdge& e) { return e.tag == tag; }));
}

void Mesh::validate(double circle_tolerance) const {
    if (triangles_.empty()) throw ParameterError("mesh has no triangles");
    for (int e = 0; e < num_elements(); ++e)
        if (!(signed_area(e) > 0.0)) throw ParameterError("triangle " + std::to_string(e) + " is not positively oriented");

    // Boundary edges must be exactly the edges owned by one triangle.
    std::map<EdgeKey, int> owners;
    for (const auto& t : triangles_)
        for (int k = 0; k < 3; ++k) ++owners[edge_key(t[k], t[(k + 1) % 3])];
    std::map<EdgeKey, int> tagged;
    for (const auto& e : boundary_edges_) ++tagged[edge_key(e.a, e.b)];
    for (const auto& [key, count] : owners) {
        if (count > 2) throw ParameterError("non-manifold edge in triangulation");
        const auto it = tagged.find(key);
        if ((count == 1) != (it != tagged.end() && it->second == 1))
            throw ParameterError("boundary edge table does not match triangulation boundary");
    }
    if (tagged.size() != boundary_edges_.size()) throw ParameterError("duplicate boundary edge");

    // Single closed loop.
    std::map<int, std::vector<int>> adjacency;
    for (const auto& e : boundary_edges_) {
        adjacency[e.a].push_back(e.b);
        adjacency[e.b].push_back(e.a);
    }
    for (const auto& [node, nbrs] : adjacency)
        if (nbrs.size() != 2) throw ParameterError("boundary is not a simple closed loop");
    if (!boundary_edges_.empty()) {
        int start = boundary_edges_.front().a, prev = -1, cur = start;
        std::size_t steps = 0;
        do {
            const auto& n = adjacency[cur];
            const int next = n[0] != prev ? n[0] : n[1];
            prev = cur;
            cur = next;
            ++steps;
        } while (cur != start && steps <= boundary_edges_.size());
        if (steps != boundary_edges_.size()) throw ParameterError("boundary consists of more than one loop");
    }

    if (count_edges(BoundaryTag::Dirichlet) == 0 || count_edges(BoundaryTag::Neumann) == 0)
        throw PartitionError("both Dirichlet and Neumann parts must be non-empty");

    if (circle_tolerance > 0.0)
        for (const auto& [node, nbrs] : adjacency)
            if (std::abs(nodes_[node].norm() - 1.0) > circle_tolerance)
                throw ParameterError("boundary node off the unit circle");
}

Mesh generate_disk_mesh(double target_h) {
    if (!(target_h > 0.0) || !(target_h < 1.0)) throw ParameterError("target_h must lie in (0, 1)");
    const int rings = static_cast<int>(std::floor(1.0 / target_h));
    const double spacing = 1.0 / rings;

    std::vector<Eigen::Vector2d> nodes{Eigen::Vector2d::Zero()};
    std::vector<int> ring_start{0};
    for (int k = 1; k <= rings; ++k) {
        ring_start.push_back(static_cast<int>(nodes.size()));
        const int count = 6 * k;
        const double r = k == rings ? 1.0 : k * spacing;
        for (int j = 0; j < count; ++j) {
            const double theta = kTwoPi * j / count;
            nodes.emplace_back(r * std::cos(theta), r * std::sin(theta));
        }
    }
    ring_start.push_back(static_cast<int>(nodes.size()));

    std::vector<std::array<int, 3>> tris;
    for (int j = 0; j < 6; ++j) tris.push_back({0, 1 + j, 1 + (j + 1) % 6});

    // Sweep between ring k (inner) and k+1 (outer) in angular order.
    for (int k = 1; k < rings; ++k) {
        const int ni = 6 * k, no = 6 * (k + 1);
        const int si = ring_start[k], so = ring_start[k + 1];
        int i = 0, j = 0;
        while (i < ni || j < no) {
            const double next_inner = static_cast<double>(i + 1) / ni;
            const double next_outer = static_cast<double>(j + 1) / no;
            const int a = si + i % ni, b = so + j % no;
            if (j < no && (i >= ni || next_outer <= next_inner)) {
                tris.push_back({a, b, so + (j + 1) % no});
                ++j;
            } else {
                tris.push_back({a, b, si + (i + 1) % ni});
                ++i;
            }
        }
    }
    for (auto& t : tris) make_ccw(nodes, t);
    delaunay_flip(nodes, tris);

    std::vector<BoundaryEdge> edges;
    const int sb = ring_start[rings], nb = 6 * rings;
    for (int j = 0; j < nb; ++j) edges.push_back({sb + j, sb + (j + 1) % nb, BoundaryTag::Neumann});

    return Mesh(std::move(nodes), std::move(tris), std::move(edges));
}

Mesh partition_boundary(const Mesh& mesh, const BoundaryPartitionSpec& spec) {
    spec.validate();
    std::vector<BoundaryEdge> edges = mesh.boundary_edges();
    for (auto& e : edges) {
        const Eigen::Vector2d mid = 0.5 * (mesh.nodes()[e.a] + mesh.nodes()[e.b]);
        e.tag = spec.contains(std::atan2(mid.y(), mid.x())) ? BoundaryTag::Dirichlet : BoundaryTag::Neumann;
    }
    Mesh out(mesh.nodes(), mesh.triangles(), std::move(edges));
    if (out.count_edges(BoundaryTag::Dirichlet) == 0 || out.count_edges(BoundaryTag::Neumann) == 0)
        throw PartitionError("boundary partition leaves an empty Dirichlet or Neumann part");
    return out;
}

Mesh make_disk_mesh(double target_h, const BoundaryPartitionSpec& spec) {
    return partition_boundary(generate_disk_mesh(target_h), spec);
}

Mesh refine_uniform(const Mesh& mesh, bool project_boundary_to_circle) {
    std::vector<Eigen::Vector2d> nodes = mesh.nodes();
    std::map<EdgeKey, int> midpoint;
    std::map<EdgeKey, bool> on_boundary;
    for (const auto& e : mesh.boundary_edges()) on_boundary[edge_key(e.a, e.b)] = true;

    const auto mid = [&](int a, int b) {
        const auto key = edge_key(a, b);
        const auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        Eigen::Vector2d p = 0.5 * (nodes[a] + nodes[b]);
        if (project_boundary_to_circle && on_boundary.count(key)) p.normalize();
        const int id = static_cast<int>(nodes.size());
        nodes.push_back(p);
        midpoint.emplace(key, id);
        return id;
    };

    std::vector<std::array<int, 3>> tris;
    tris.reserve(4 * mesh.triangles().size());
    for (const auto& t : mesh.triangles()) {
        const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        tris.push_back({t[0], ab, ca});
        tris.push_back({ab, t[1], bc});
        tris.push_back({ca, bc, t[2]});
        tris.push_back({ab, bc, ca});
    }
    std::vector<BoundaryEdge> edges;
    for (const auto& e : mesh.boundary_edges()) {
        const int m = mid(e.a, e.b);
        edges.push_back({e.a, m, e.tag});
        edges.push_back({m, e.b, e.tag});
    }
    return Mesh(std::move(nodes), std::move(tris), std::move(edges));
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
    os << "elastinv-mesh 1\n";
    os << "nodes " << mesh.num_nodes() << '\n';
    os << std::setprecision(17);
    for (const auto& p : mesh.nodes()) os << p.x() << ' ' << p.y() << '\n';
    os << "triangles " << mesh.num_elements() << '\n';
    for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    os << "boundary_edges " << mesh.boundary_edges().size() << '\n';
    for (const auto& e : mesh.boundary_edges())
        os << e.a << ' ' << e.b << ' ' << (e.tag == BoundaryTag::Dirichlet ? 'D' : 'N') << '\n';
}

Mesh read_mesh(std::istream& is) {
    const auto fail = [](const std::string& what) -> Mesh { throw ParameterError("mesh file: " + what); };
    const auto expect_header = [&](const std::string& word) {
        std::string got;
        long count = -1;
        if (!(is >> got >> count) || got != word || count < 0) fail("expected '" + word + " <count>'");
        return static_cast<std::size_t>(count);
    };

    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "elastinv-mesh" || version != 1) return fail("bad header");

    std::vector<Eigen::Vector2d> nodes(expect_header("nodes"));
    for (auto& p : nodes)
        if (!(is >> p.x() >> p.y())) return fail("truncated node table");
    std::vector<std::array<int, 3>> tris(expect_header("triangles"));
    for (auto& t : tris)
        if (!(is >> t[0] >> t[1] >> t[2])) return fail("truncated triangle table");
    std::vector<BoundaryEdge> edges(expect_header("boundary_edges"));
    for (auto& e : edges) {
        char tag = 0;
        if (!(is >> e.a >> e.b >> tag) || (tag != 'D' && tag != 'N')) return fail("bad boundary edge record");
        e.tag = tag == 'D' ? BoundaryTag::Dirichlet : BoundaryTag::Neumann;
    }
    return Mesh(std::move(nodes), std::move(tris), std::move(edges));
}

} // namespace elastinv
