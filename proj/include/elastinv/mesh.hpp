#pragma once

#include <array>
#include <iosfwd>
#include <numbers>
#include <vector>

#include <Eigen/Core>

namespace elastinv {

enum class BoundaryTag { Dirichlet, Neumann };

struct BoundaryEdge {
    int a = 0;
    int b = 0;
    BoundaryTag tag = BoundaryTag::Neumann;
};

/// Half-open angular interval [begin, end) in radians marking the Dirichlet arc.
/// Edges are assigned by the polar angle of their midpoint; the interval may
/// wrap past 2*pi.
struct BoundaryPartitionSpec {
    double begin = std::numbers::pi;
    double end = 2.0 * std::numbers::pi;

    /// Throws PartitionError unless 0 < end - begin < 2*pi.
    void validate() const;
    bool contains(double angle) const;
};

/// Triangulation of a planar domain with a tagged boundary loop.
///
/// Triangles are counter-clockwise. Boundary data on Gamma_N (loads, traces)
/// is always indexed by `neumann_nodes()` order, interleaved as (x, y) per
/// node. Nodes shared by a Dirichlet and a Neumann edge belong to both node
/// lists; the displacement there is clamped to zero.
class Mesh {
public:
    Mesh() = default;
    Mesh(std::vector<Eigen::Vector2d> nodes, std::vector<std::array<int, 3>> triangles,
         std::vector<BoundaryEdge> boundary_edges);

    const std::vector<Eigen::Vector2d>& nodes() const { return nodes_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }

    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_elements() const { return static_cast<int>(triangles_.size()); }

    double signed_area(int element) const;
    double area(int element) const { return signed_area(element); }
    Eigen::Vector2d centroid(int element) const;
    double total_area() const;
    double max_edge_length() const;

    /// Sorted, unique node ids lying on Dirichlet / Neumann edges.
    const std::vector<int>& dirichlet_nodes() const { return dirichlet_nodes_; }
    const std::vector<int>& neumann_nodes() const { return neumann_nodes_; }
    int num_neumann_nodes() const { return static_cast<int>(neumann_nodes_.size()); }
    /// Position of `node` in neumann_nodes(), or -1.
    int neumann_slot(int node) const { return neumann_slot_[node]; }
    bool is_dirichlet_node(int node) const { return dirichlet_flag_[node] != 0; }

    int count_edges(BoundaryTag tag) const;

    /// Checks the structural invariants: index ranges, positive areas, a
    /// single closed boundary loop, both tags present and, when
    /// `circle_tolerance` > 0, boundary nodes within that distance of the unit
    /// circle. Throws ParameterError / PartitionError.
    void validate(double circle_tolerance = 0.0) const;

private:
    void index_boundary();

    std::vector<Eigen::Vector2d> nodes_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<BoundaryEdge> boundary_edges_;
    std::vector<int> dirichlet_nodes_;
    std::vector<int> neumann_nodes_;
    std::vector<int> neumann_slot_;
    std::vector<char> dirichlet_flag_;
};

/// Ring spacing factor: generate_disk_mesh(h) has max edge length <= kMaxEdgeFactor * h.
inline constexpr double kMaxEdgeFactor = 2.5;

/// Deterministic Delaunay triangulation of the unit disk.
///
/// Nodes sit on floor(1/h) concentric rings (6k nodes on ring k, plus the
/// centre); neighbouring rings are stitched by an angular sweep and the
/// result is made Delaunay by Lawson edge flips. All boundary edges carry
/// the Neumann tag until partition_boundary() is applied.
/// Throws ParameterError unless 0 < target_h < 1.
Mesh generate_disk_mesh(double target_h);

/// Retags every boundary edge by the angle of its midpoint.
/// Throws PartitionError if either part ends up empty.
Mesh partition_boundary(const Mesh& mesh, const BoundaryPartitionSpec& spec);

/// Convenience: generate + partition.
Mesh make_disk_mesh(double target_h, const BoundaryPartitionSpec& spec = {});

/// Red refinement (each triangle split in four). Existing node ids are kept;
/// midpoints of boundary edges are projected onto the unit circle and the
/// child edges inherit the parent tag.
Mesh refine_uniform(const Mesh& mesh, bool project_boundary_to_circle = true);

/// Plain-text mesh format, one record per line:
///
///     elastinv-mesh 1
///     nodes <N>
///     <x> <y>                      (N lines, node id = line order)
///     triangles <T>
///     <n0> <n1> <n2>               (T lines, counter-clockwise)
///     boundary_edges <E>
///     <a> <b> <D|N>                (E lines)
///
/// Coordinates are written with 17 significant digits so a round trip is exact.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

} // namespace elastinv
