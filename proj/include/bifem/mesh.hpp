#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>

namespace bifem {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Triangle = std::array<int, 3>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// One value per mesh node.
struct NodalField {
  std::vector<double> values;

  NodalField() = default;
  explicit NodalField(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit NodalField(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// One scalar per triangle.
struct TriangleField {
  std::vector<double> values;

  TriangleField() = default;
  explicit TriangleField(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit TriangleField(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// One 2-vector per triangle (gradients, fluxes).
struct TriangleVectorField {
  std::vector<Vec2> values;

  std::size_t size() const noexcept { return values.size(); }
  const Vec2& operator[](std::size_t i) const { return values[i]; }
};

class Mesh;

/// Riemannian metric sigma and lapse alpha, both constant per triangle.
struct MetricField {
  std::vector<Mat2> sigma;
  std::vector<double> alpha;

  static MetricField flat(std::size_t triangle_count);
  static MetricField uniform(std::size_t triangle_count, double alpha, const Mat2& sigma);

  /// Throws invalid_argument unless sizes match the mesh, every sigma is
  /// symmetric positive definite and every alpha is finite and positive.
  void validate(const Mesh& mesh) const;

  /// The conformal metric alpha^2 sigma with unit lapse.
  MetricField conformal() const;

  std::size_t size() const noexcept { return alpha.size(); }
};

struct PointLocation {
  int triangle = -1;
  std::array<double, 3> barycentric{};
};

/// Conforming planar triangulation. Immutable once built; all derived
/// geometry is computed in the constructor.
class Mesh {
 public:
  /// Triangles with negative orientation are flipped; degenerate triangles,
  /// hanging nodes (an edge shared by more than two triangles) and unused
  /// nodes are rejected. A positive `min_angle_deg` enforces a quality floor.
  Mesh(std::vector<Vec2> nodes, std::vector<Triangle> triangles, double min_angle_deg = 0.0);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t triangle_count() const noexcept { return triangles_.size(); }

  const std::vector<Vec2>& nodes() const noexcept { return nodes_; }
  const Vec2& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  const Triangle& triangle(std::size_t t) const { return triangles_[t]; }

  const std::vector<int>& boundary_nodes() const noexcept { return boundary_nodes_; }
  const std::vector<std::pair<int, int>>& boundary_edges() const noexcept { return boundary_edges_; }
  bool is_boundary(std::size_t node) const { return on_boundary_[node] != 0; }

  /// Unique undirected edges (i < j) and the one or two triangles sharing each.
  const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
  const std::vector<std::array<int, 2>>& edge_triangles() const noexcept { return edge_triangles_; }
  /// Node-to-node adjacency as (neighbor, edge index) pairs.
  const std::vector<std::vector<std::pair<int, int>>>& node_edges() const noexcept { return node_edges_; }
  const std::vector<std::vector<int>>& node_triangles() const noexcept { return node_triangles_; }

  double area(std::size_t t) const { return areas_[t]; }
  double total_area() const noexcept { return total_area_; }
  Vec2 centroid(std::size_t t) const;
  /// Constant gradients of the three hat functions on triangle t.
  const std::array<Vec2, 3>& shape_gradients(std::size_t t) const { return shape_grads_[t]; }

  double h_max() const noexcept { return h_max_; }
  double h_min() const noexcept { return h_min_; }
  double min_angle_deg() const noexcept { return min_angle_deg_; }
  double mean_area() const noexcept { return total_area_ / static_cast<double>(triangles_.size()); }

  /// Triangle containing p with barycentric coordinates, or triangle == -1.
  PointLocation locate(const Vec2& p) const;
  /// Triangles whose bounding box meets the disc B_r(p).
  std::vector<int> triangles_near(const Vec2& p, double r) const;

  /// Distance from p to the nearest boundary edge.
  double distance_to_boundary(const Vec2& p) const;

 private:
  void build_topology();
  void build_geometry();
  void build_grid();

  std::vector<Vec2> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<int> boundary_nodes_;
  std::vector<std::pair<int, int>> boundary_edges_;
  std::vector<char> on_boundary_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::array<int, 2>> edge_triangles_;
  std::vector<std::vector<std::pair<int, int>>> node_edges_;
  std::vector<std::vector<int>> node_triangles_;
  std::vector<double> areas_;
  std::vector<std::array<Vec2, 3>> shape_grads_;
  double total_area_ = 0.0;
  double h_max_ = 0.0;
  double h_min_ = 0.0;
  double min_angle_deg_ = 0.0;

  // Uniform bucket grid over triangle bounding boxes.
  Vec2 grid_origin_ = Vec2::Zero();
  double grid_cell_ = 1.0;
  int grid_nx_ = 1;
  int grid_ny_ = 1;
  std::vector<std::vector<int>> grid_;
};

struct MeshOptions {
  double min_angle_deg = 20.0;
  /// Points inserted as mesh vertices (atom locations, typically).
  std::vector<Vec2> required_points;
  /// Relative jitter applied to interior seed points.
  double jitter = 0.0;
  unsigned seed = 1234;
};

Mesh triangulate_disk(double radius, double h, const MeshOptions& options = {});
Mesh triangulate_polygon(std::span<const Vec2> vertices, double h, const MeshOptions& options = {});

TriangleVectorField p1_gradient(const Mesh& mesh, const NodalField& u);

/// K_ij = sum_T area(T) Deta_i^T W_T Deta_j over all nodes (no boundary rows removed).
SparseMatrix assemble_weighted_stiffness(const Mesh& mesh, std::span<const Mat2> weights);

/// Shortest-path distances over the edge graph (mesh edges plus the chords
/// across convex triangle pairs); each link is measured in
/// `metric` (alpha^2 sigma, as a tangent-vector metric) averaged over its
/// adjacent triangles.
NodalField graph_distance(const Mesh& mesh, const MetricField& metric, int source);

// Plain-text mesh files: nodes as "x y boundary_flag", triangles as "i j k".
void write_mesh_files(const Mesh& mesh, const std::string& node_path, const std::string& triangle_path);
Mesh read_mesh_files(const std::string& node_path, const std::string& triangle_path,
                     double min_angle_deg = 0.0);

/// Legacy ASCII VTK unstructured grid with optional point and cell scalars.
void write_vtk(const std::string& path, const Mesh& mesh,
               const std::map<std::string, const NodalField*>& point_data,
               const std::map<std::string, const TriangleField*>& cell_data);

}  // namespace bifem
