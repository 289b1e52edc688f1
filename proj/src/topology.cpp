#include "ttnheom/ttn.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>

namespace ttnheom::ttn {

namespace {

constexpr Index kSaturated = Index(1) << 50;

Index sat_mul(Index a, Index b) {
  if (a >= kSaturated / std::max<Index>(b, 1)) return kSaturated;
  return a * b;
}

int bond_count(const std::array<Leg, 3>& legs) {
  return static_cast<int>(std::count_if(legs.begin(), legs.end(), [](const Leg& l) { return l.kind == LegKind::Bond; }));
}

Leg bond(int ref) { return {LegKind::Bond, ref}; }
Leg bex(int k) { return {LegKind::Bexciton, k}; }
Leg dummy() { return {LegKind::Dummy, -1}; }

void check_depths(const std::vector<int>& depths, int dim) {
  if (dim < 1) throw TopologyError("topology: system dimension must be positive");
  for (int n : depths)
    if (n < 1) throw TopologyError("topology: bexciton depths must be positive");
}

// K = 0: a single rank-1 node carrying two dummy legs.
std::vector<std::array<Leg, 3>> closed_proto() {
  return {{Leg{LegKind::SystemKet, -1}, Leg{LegKind::SystemBra, -1}, bond(1)}, {bond(0), dummy(), dummy()}};
}

}  // namespace

std::vector<int> TreeTopology::children(int s) const {
  std::vector<int> c;
  const Node& n = node(s);
  for (int l = (s == 0 ? 2 : 1); l < 3; ++l)
    if (n.legs[static_cast<size_t>(l)].kind == LegKind::Bond) c.push_back(n.legs[static_cast<size_t>(l)].ref);
  return c;
}

bool TreeTopology::in_subtree(int s, int n) const {
  while (n > 0) {
    if (n == s) return true;
    n = parent(n);
  }
  return s == 0;
}

Index TreeTopology::open_size(const Leg& leg) const {
  switch (leg.kind) {
    case LegKind::SystemKet:
    case LegKind::SystemBra:
      return dim_;
    case LegKind::Bexciton:
      return depths_.at(static_cast<size_t>(leg.ref));
    case LegKind::Dummy:
      return 1;
    case LegKind::Bond:
      break;
  }
  throw TopologyError("open_size: bond legs have no fixed size");
}

std::uint64_t TreeTopology::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ULL;
    }
  };
  mix(dim_);
  mix(static_cast<std::int64_t>(depths_.size()));
  for (int n : depths_) mix(n);
  for (const Node& n : nodes_) {
    mix(n.parent);
    for (const Leg& l : n.legs) {
      mix(static_cast<int>(l.kind));
      mix(l.ref);
    }
  }
  return h;
}

TreeTopology finalize_topology(std::vector<std::array<Leg, 3>> proto, TopologyKind kind, int dim,
                               std::vector<int> depths) {
  check_depths(depths, dim);
  const int np = static_cast<int>(proto.size());
  const int nk = static_cast<int>(depths.size());

  int root = -1;
  std::vector<int> seen(static_cast<size_t>(nk), 0);
  for (int p = 0; p < np; ++p) {
    int ket = 0, bra = 0;
    for (const Leg& l : proto[static_cast<size_t>(p)]) {
      switch (l.kind) {
        case LegKind::SystemKet:
          ++ket;
          break;
        case LegKind::SystemBra:
          ++bra;
          break;
        case LegKind::Bexciton:
          if (l.ref < 0 || l.ref >= nk) throw TopologyError("topology: bexciton index out of range");
          ++seen[static_cast<size_t>(l.ref)];
          break;
        case LegKind::Bond:
          if (l.ref < 0 || l.ref >= np || l.ref == p) throw TopologyError("topology: bond to unknown node");
          break;
        case LegKind::Dummy:
          break;
      }
    }
    if (ket != bra || ket > 1) throw TopologyError("topology: system legs must appear together on the root");
    if (ket == 1) {
      if (root >= 0) throw TopologyError("topology: more than one root");
      root = p;
    }
  }
  if (root < 0) throw TopologyError("topology: no node carries the system legs");
  for (int k = 0; k < nk; ++k) {
    if (seen[static_cast<size_t>(k)] == 0) throw TopologyError("topology: bexciton " + std::to_string(k + 1) + " missing");
    if (seen[static_cast<size_t>(k)] > 1)
      throw TopologyError("topology: bexciton " + std::to_string(k + 1) + " placed twice");
  }
  for (int p = 0; p < np; ++p)
    for (const Leg& l : proto[static_cast<size_t>(p)]) {
      if (l.kind != LegKind::Bond) continue;
      const auto& other = proto[static_cast<size_t>(l.ref)];
      const int back = static_cast<int>(
          std::count_if(other.begin(), other.end(), [&](const Leg& o) { return o.kind == LegKind::Bond && o.ref == p; }));
      const int fwd = static_cast<int>(std::count_if(proto[static_cast<size_t>(p)].begin(),
                                                     proto[static_cast<size_t>(p)].end(),
                                                     [&](const Leg& o) { return o.kind == LegKind::Bond && o.ref == l.ref; }));
      if (back != 1 || fwd != 1) throw TopologyError("topology: bonds must be listed symmetrically and only once");
    }
  if (bond_count(proto[static_cast<size_t>(root)]) != 1) throw TopologyError("topology: root needs exactly one bond");

  // Breadth-first renumbering.
  std::vector<int> new_id(static_cast<size_t>(np), -1);
  std::vector<int> order;
  std::vector<int> proto_parent(static_cast<size_t>(np), -1);
  std::deque<int> queue{root};
  new_id[static_cast<size_t>(root)] = 0;
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    order.push_back(p);
    for (const Leg& l : proto[static_cast<size_t>(p)]) {
      if (l.kind != LegKind::Bond || l.ref == proto_parent[static_cast<size_t>(p)]) continue;
      if (new_id[static_cast<size_t>(l.ref)] >= 0) throw TopologyError("topology: graph contains a cycle");
      new_id[static_cast<size_t>(l.ref)] = static_cast<int>(order.size() + queue.size());
      proto_parent[static_cast<size_t>(l.ref)] = p;
      queue.push_back(l.ref);
    }
  }
  if (static_cast<int>(order.size()) != np) throw TopologyError("topology: graph is disconnected");

  TreeTopology t;
  t.kind_ = kind;
  t.dim_ = dim;
  t.depths_ = std::move(depths);
  t.nodes_.resize(static_cast<size_t>(np));
  for (int p : order) {
    const int s = new_id[static_cast<size_t>(p)];
    Node& n = t.nodes_[static_cast<size_t>(s)];
    n.id = s;
    const int pp = proto_parent[static_cast<size_t>(p)];
    n.parent = pp < 0 ? -1 : new_id[static_cast<size_t>(pp)];
    n.height = pp < 0 ? 0 : t.nodes_[static_cast<size_t>(n.parent)].height + 1;
    std::vector<Leg> rest;
    for (Leg l : proto[static_cast<size_t>(p)]) {
      if (l.kind == LegKind::Bond) l.ref = new_id[static_cast<size_t>(l.ref)];
      if (s == 0) {
        if (l.kind == LegKind::SystemKet) n.legs[0] = l;
        else if (l.kind == LegKind::SystemBra) n.legs[1] = l;
        else n.legs[2] = l;
      } else if (l.kind == LegKind::Bond && l.ref == n.parent) {
        n.legs[0] = l;
      } else {
        rest.push_back(l);
      }
    }
    if (s == 0 && n.legs[2].kind != LegKind::Bond) throw TopologyError("topology: root third leg must be a bond");
    if (s != 0) {
      n.legs[1] = rest.at(0);
      n.legs[2] = rest.at(1);
    }
  }

  t.leg_in_parent_.assign(static_cast<size_t>(np), -1);
  t.feature_node_.assign(static_cast<size_t>(nk), -1);
  for (const Node& n : t.nodes_)
    for (int l = 0; l < 3; ++l) {
      const Leg& leg = n.legs[static_cast<size_t>(l)];
      if (leg.kind == LegKind::Bond && leg.ref != n.parent) t.leg_in_parent_[static_cast<size_t>(leg.ref)] = l;
      if (leg.kind == LegKind::Bexciton) t.feature_node_[static_cast<size_t>(leg.ref)] = n.id;
    }

  t.subtree_.assign(static_cast<size_t>(np), {});
  std::vector<Index> below(static_cast<size_t>(np), 1);
  for (int s = np - 1; s >= 1; --s) {
    const Node& n = t.nodes_[static_cast<size_t>(s)];
    auto& sub = t.subtree_[static_cast<size_t>(s)];
    for (int l = 1; l < 3; ++l) {
      const Leg& leg = n.legs[static_cast<size_t>(l)];
      if (leg.kind == LegKind::Bond) {
        const auto& c = t.subtree_[static_cast<size_t>(leg.ref)];
        sub.insert(sub.end(), c.begin(), c.end());
        below[static_cast<size_t>(s)] = sat_mul(below[static_cast<size_t>(s)], below[static_cast<size_t>(leg.ref)]);
      } else {
        if (leg.kind == LegKind::Bexciton) sub.push_back(leg.ref);
        below[static_cast<size_t>(s)] = sat_mul(below[static_cast<size_t>(s)], t.open_size(leg));
      }
    }
  }
  for (int k : t.subtree_.size() > 1 ? t.subtree_[1] : std::vector<int>{}) t.subtree_[0].push_back(k);

  Index total = sat_mul(dim, dim);
  for (int n : t.depths_) total = sat_mul(total, n);
  t.capacity_.assign(static_cast<size_t>(np), 1);
  for (int s = 1; s < np; ++s) {
    const Index b = below[static_cast<size_t>(s)];
    const Index above = b >= kSaturated ? kSaturated : (total >= kSaturated ? kSaturated : total / b);
    t.capacity_[static_cast<size_t>(s)] = std::min(b, above);
  }
  return t;
}

TreeTopology make_train(const std::vector<int>& depths, int dim) {
  check_depths(depths, dim);
  const int nk = static_cast<int>(depths.size());
  if (nk == 0) return finalize_topology(closed_proto(), TopologyKind::Train, dim, depths);
  std::vector<std::array<Leg, 3>> proto;
  proto.push_back({Leg{LegKind::SystemKet, -1}, Leg{LegKind::SystemBra, -1}, bond(1)});
  if (nk == 1) {
    proto.push_back({bond(0), bex(0), dummy()});
  } else {
    for (int s = 1; s <= nk - 1; ++s) {
      const Leg last = s == nk - 1 ? bex(nk - 1) : bond(s + 1);
      proto.push_back({bond(s - 1), bex(s - 1), last});
    }
  }
  return finalize_topology(std::move(proto), TopologyKind::Train, dim, depths);
}

TreeTopology make_balanced(const std::vector<int>& depths, int dim) {
  check_depths(depths, dim);
  const int nk = static_cast<int>(depths.size());
  if (nk == 0) return finalize_topology(closed_proto(), TopologyKind::Balanced, dim, depths);
  std::vector<std::array<Leg, 3>> proto;
  proto.push_back({Leg{LegKind::SystemKet, -1}, Leg{LegKind::SystemBra, -1}, bond(-1)});

  auto add_node = [&](Leg b, Leg c) {
    const int id = static_cast<int>(proto.size());
    proto.push_back({bond(-1), b, c});
    for (const Leg& l : {b, c})
      if (l.kind == LegKind::Bond) proto[static_cast<size_t>(l.ref)][0].ref = id;
    return id;
  };

  // Bexcitons are paired into leaf nodes; an odd one out stays a bare leg.
  std::vector<Leg> units;
  for (int k = 0; k < nk; k += 2) {
    if (k + 1 < nk) units.push_back(bond(add_node(bex(k), bex(k + 1))));
    else units.push_back(bex(k));
  }
  std::function<Leg(size_t, size_t)> build = [&](size_t lo, size_t hi) -> Leg {
    if (hi - lo == 1) return units[lo];
    const size_t mid = lo + (hi - lo + 1) / 2;
    const Leg l = build(lo, mid);
    const Leg r = build(mid, hi);
    return bond(add_node(l, r));
  };
  Leg top = build(0, units.size());
  if (top.kind != LegKind::Bond) top = bond(add_node(top, dummy()));
  proto[0][2].ref = top.ref;
  proto[static_cast<size_t>(top.ref)][0].ref = 0;
  return finalize_topology(std::move(proto), TopologyKind::Balanced, dim, depths);
}

TreeTopology make_explicit(const nlohmann::json& nodes, const std::vector<int>& depths, int dim) {
  if (!nodes.is_array() || nodes.empty()) throw TopologyError("topology: explicit node list must be a non-empty array");
  std::vector<std::int64_t> ids;
  for (const auto& n : nodes) {
    if (!n.is_object() || !n.contains("id") || !n.contains("legs"))
      throw TopologyError("topology: each node needs 'id' and 'legs'");
    ids.push_back(n.at("id").get<std::int64_t>());
  }
  auto index_of = [&](std::int64_t id) {
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw TopologyError("topology: bond to unknown node " + std::to_string(id));
    return static_cast<int>(it - ids.begin());
  };
  for (size_t a = 0; a < ids.size(); ++a)
    if (std::count(ids.begin(), ids.end(), ids[a]) > 1) throw TopologyError("topology: duplicate node id");

  std::vector<std::array<Leg, 3>> proto;
  for (const auto& n : nodes) {
    const auto& legs = n.at("legs");
    if (!legs.is_array() || legs.size() != 3) throw TopologyError("topology: every node has exactly three legs");
    std::array<Leg, 3> p;
    for (size_t l = 0; l < 3; ++l) {
      const auto& v = legs[l];
      if (v.is_number_integer()) {
        p[l] = bond(index_of(v.get<std::int64_t>()));
      } else if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "i") p[l] = {LegKind::SystemKet, -1};
        else if (s == "j") p[l] = {LegKind::SystemBra, -1};
        else if (s == "dummy") p[l] = dummy();
        else if (s.size() > 1 && s[0] == 'n' && s.find_first_not_of("0123456789", 1) == std::string::npos)
          p[l] = bex(std::stoi(s.substr(1)) - 1);
        else throw TopologyError("topology: unknown leg label '" + s + "'");
      } else {
        throw TopologyError("topology: legs are node ids or labels");
      }
    }
    proto.push_back(p);
  }
  return finalize_topology(std::move(proto), TopologyKind::Explicit, dim, depths);
}

TreeTopology make_topology(TopologyKind kind, const std::vector<int>& depths, int dim, const nlohmann::json& nodes) {
  switch (kind) {
    case TopologyKind::Train:
      return make_train(depths, dim);
    case TopologyKind::Balanced:
      return make_balanced(depths, dim);
    case TopologyKind::Explicit:
      return make_explicit(nodes, depths, dim);
  }
  throw TopologyError("topology: unknown kind");
}

std::vector<int> dfs_path(const TreeTopology& topo) {
  std::vector<int> path;
  std::function<void(int)> visit = [&](int s) {
    path.push_back(s);
    for (int c : topo.children(s)) {
      visit(c);
      path.push_back(s);
    }
  };
  visit(0);
  return path;
}

std::array<Index, 3> node_dims(const TreeTopology& topo, const Ranks& ranks, int s) {
  std::array<Index, 3> d{};
  const Node& n = topo.node(s);
  for (int l = 0; l < 3; ++l) {
    const Leg& leg = n.legs[static_cast<size_t>(l)];
    d[static_cast<size_t>(l)] = leg.kind == LegKind::Bond ? ranks.at(static_cast<size_t>(l == 0 && s != 0 ? s : leg.ref))
                                                          : topo.open_size(leg);
  }
  return d;
}

Index size_of(const TreeTopology& topo, const Ranks& ranks) {
  Index total = 0;
  for (int s = 0; s < topo.num_nodes(); ++s) {
    const auto d = node_dims(topo, ranks, s);
    total += d[0] * d[1] * d[2];
  }
  return total;
}

Ranks clamp_ranks(const TreeTopology& topo, Index rank) {
  if (rank < 1) throw StateError("ranks must be at least 1");
  const int n = topo.num_nodes();
  Ranks r(static_cast<size_t>(n), 1);
  for (int s = 1; s < n; ++s) r[static_cast<size_t>(s)] = std::min(rank, topo.capacity(s));
  bool changed = true;
  while (changed) {
    changed = false;
    for (int s = 0; s < n; ++s) {
      const auto d = node_dims(topo, r, s);
      const Node& node = topo.node(s);
      for (int l = 0; l < 3; ++l) {
        const Leg& leg = node.legs[static_cast<size_t>(l)];
        if (leg.kind != LegKind::Bond) continue;
        const int b = (l == 0 && s != 0) ? s : leg.ref;
        Index others = 1;
        for (int o = 0; o < 3; ++o)
          if (o != l) others *= d[static_cast<size_t>(o)];
        if (r[static_cast<size_t>(b)] > others) {
          r[static_cast<size_t>(b)] = others;
          changed = true;
        }
      }
    }
  }
  return r;
}

Ranks full_ranks(const TreeTopology& topo) { return clamp_ranks(topo, std::numeric_limits<Index>::max() / 8); }

void validate_ranks(const TreeTopology& topo, const Ranks& ranks, bool strict) {
  const int n = topo.num_nodes();
  if (static_cast<int>(ranks.size()) != n) throw StateError("ranks: one entry per bond required");
  for (int s = 1; s < n; ++s) {
    const Index r = ranks[static_cast<size_t>(s)];
    if (r < 1) throw StateError("ranks: bond " + std::to_string(s) + " has rank below 1");
    if (r > topo.capacity(s))
      throw StateError("ranks: bond " + std::to_string(s) + " rank " + std::to_string(r) + " exceeds capacity " +
                       std::to_string(topo.capacity(s)));
  }
  for (int s = 1; s < n; ++s) {
    const auto d = node_dims(topo, ranks, s);
    if (d[0] > d[1] * d[2])
      throw StateError("ranks: node " + std::to_string(s) + " cannot be semi-unitary (rank " + std::to_string(d[0]) +
                       " > " + std::to_string(d[1] * d[2]) + ")");
  }
  if (!strict) return;
  for (int s = 0; s < n; ++s) {
    const auto d = node_dims(topo, ranks, s);
    for (int l = 0; l < 3; ++l)
      if (topo.node(s).legs[static_cast<size_t>(l)].kind == LegKind::Bond &&
          d[static_cast<size_t>(l)] * d[static_cast<size_t>(l)] > d[0] * d[1] * d[2])
        throw StateError("ranks: a bond of node " + std::to_string(s) + " exceeds the product of its other legs");
  }
}

}  // namespace ttnheom::ttn
