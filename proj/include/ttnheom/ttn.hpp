#pragma once

#include "ttnheom/dense.hpp"
#include "ttnheom/linalg.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttnheom::ttn {

class TopologyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LegKind { SystemKet, SystemBra, Bexciton, Bond, Dummy };

// ref: bexciton index k for Bexciton, neighbouring node id for Bond, -1 otherwise.
struct Leg {
  LegKind kind = LegKind::Dummy;
  int ref = -1;
};

struct Node {
  int id = 0;
  int parent = -1;
  int height = 0;
  std::array<Leg, 3> legs;
};

enum class TopologyKind { Train, Balanced, Explicit };

// Immutable tree over order-3 cores. Node 0 is the root with legs (i, j, a_1); every other
// node s has its parent bond a_s on leg 0. Bond s joins node s to its parent.
class TreeTopology {
 public:
  TreeTopology() = default;

  TopologyKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int num_features() const { return static_cast<int>(depths_.size()); }
  const std::vector<int>& depths() const { return depths_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int s) const { return nodes_.at(static_cast<size_t>(s)); }
  int parent(int s) const { return node(s).parent; }
  // Leg position of bond s inside its parent.
  int leg_in_parent(int s) const { return leg_in_parent_.at(static_cast<size_t>(s)); }
  std::vector<int> children(int s) const;
  int feature_node(int k) const { return feature_node_.at(static_cast<size_t>(k)); }
  // Bexcitons below bond s, in leg order.
  const std::vector<int>& subtree_features(int s) const { return subtree_.at(static_cast<size_t>(s)); }
  bool in_subtree(int s, int node) const;
  // Size of a non-bond leg.
  Index open_size(const Leg& leg) const;
  // min(open dimension below bond s, open dimension above it), saturated.
  Index capacity(int s) const { return capacity_.at(static_cast<size_t>(s)); }
  std::uint64_t hash() const;

  friend TreeTopology finalize_topology(std::vector<std::array<Leg, 3>> proto, TopologyKind kind, int dim,
                                        std::vector<int> depths);

 private:
  TopologyKind kind_ = TopologyKind::Train;
  int dim_ = 0;
  std::vector<int> depths_;
  std::vector<Node> nodes_;
  std::vector<int> leg_in_parent_;
  std::vector<int> feature_node_;
  std::vector<std::vector<int>> subtree_;
  std::vector<Index> capacity_;
};

// Validates a proto tree (bond refs are proto indices, any leg order) and renumbers it
// breadth-first from the root, children ordered by leg position.
TreeTopology finalize_topology(std::vector<std::array<Leg, 3>> proto, TopologyKind kind, int dim,
                               std::vector<int> depths);

TreeTopology make_train(const std::vector<int>& depths, int dim);
TreeTopology make_balanced(const std::vector<int>& depths, int dim);
// nodes: [{"id": 0, "legs": ["i", "j", 1]}, {"id": 1, "legs": [0, "n1", "n2"]}, ...];
// integers name neighbouring nodes, "nK" is bexciton K (1-based), "dummy" a size-1 leg.
TreeTopology make_explicit(const nlohmann::json& nodes, const std::vector<int>& depths, int dim);
TreeTopology make_topology(TopologyKind kind, const std::vector<int>& depths, int dim,
                           const nlohmann::json& nodes = nullptr);

// Round trip from the root; each bond is crossed twice.
std::vector<int> dfs_path(const TreeTopology& topo);

// Ranks are indexed by bond id (entry 0 unused, kept at 1).
using Ranks = std::vector<Index>;

// Requested rank on every bond reduced to what the tree can hold.
Ranks clamp_ranks(const TreeTopology& topo, Index rank);
Ranks full_ranks(const TreeTopology& topo);
// Throws StateError when a rank exceeds capacity or a core could not be semi-unitary. strict
// also requires every bond to fit within the product of the other two legs of both its nodes,
// which fixed-rank sweeps need.
void validate_ranks(const TreeTopology& topo, const Ranks& ranks, bool strict = false);

std::array<Index, 3> node_dims(const TreeTopology& topo, const Ranks& ranks, int s);
Index size_of(const TreeTopology& topo, const Ranks& ranks);

struct TtnState {
  TreeTopology topo;
  std::vector<Tensor> cores;  // cores[0] = A0 (M, M, R_1); cores[s] = U(s) (R_s, beta, gamma)
  double time = 0.0;

  Index rank(int s) const { return cores.at(static_cast<size_t>(s)).dim(0); }
  Ranks ranks() const;
  Index max_rank() const;
  Index size() const;
};

// A0 = rho0 (x) delta_{a_1,0}; U pages filled along anti-diagonals of the (beta, gamma) grid.
TtnState init_state(const TreeTopology& topo, const Mat& rho0, const Ranks& ranks);

// (beta, gamma) of page a in a d1 x d2 grid.
std::pair<Index, Index> page_position(Index a, Index d1, Index d2);

Mat extract_rho(const TtnState& state);

DenseEdo dense_edo(const TtnState& state, Index guard = kDenseGuard);

// Makes every semi-unitary core exactly row-orthonormal by QR from the leaves up. The
// triangular factors are pushed toward the root; with absorb_root false the root is left
// untouched (the caller recomputes it).
void regauge(TtnState& st, bool absorb_root = true);

// Hierarchical SVD of a dense EDO onto the given tree; ranks default to full.
TtnState decompose_dense(const DenseEdo& edo, const TreeTopology& topo, std::optional<Ranks> ranks = std::nullopt);

// max |U U^dagger - 1| per node (entry 0 is 0).
std::vector<double> check_semiunitary(const TtnState& state);

// Versioned binary blob: header (magic, version, topology hash, time, ranks, metadata) then
// every core in row-major complex-pair layout.
void save_checkpoint(const std::string& path, const TtnState& state, const std::string& metadata = "");
struct Checkpoint {
  TtnState state;
  std::string metadata;
};
Checkpoint load_checkpoint(const std::string& path, const TreeTopology& topo);

}  // namespace ttnheom::ttn
