#include "relcap/attention_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "relcap/error.hpp"

namespace relcap::attn {

namespace {

constexpr double kMassFloor = 1e-12;
constexpr double kCostScale = 1e9;

void check_box(const Box& b) {
  constexpr double tol = 1e-9;
  if (!(b.w > 0.0 && b.h > 0.0) || b.x < -tol || b.y < -tol || b.x + b.w > 1.0 + tol || b.y + b.h > 1.0 + tol) {
    std::ostringstream os;
    os << "rasterize: box [" << b.x << "," << b.y << "," << b.w << "," << b.h << "] not inside the unit square";
    throw DataError(os.str());
  }
}

}  // namespace

double AttentionGrid::total() const {
  double s = 0.0;
  for (double v : cells) s += v;
  return s;
}

void AttentionGrid::normalize() {
  const double s = total();
  if (!(s > 0.0)) throw DataError("attention grid has zero total mass");
  for (double& v : cells) v /= s;
}

AttentionGrid rasterize_raw(std::span<const Box> boxes, std::span<const double> weights, int grid) {
  if (boxes.size() != weights.size()) throw DataError("rasterize: box and weight counts differ");
  AttentionGrid out(grid);
  const double cell = 1.0 / grid;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box& b = boxes[k];
    if (weights[k] < 0.0) throw DataError("rasterize: negative weight");
    if (weights[k] == 0.0) continue;
    check_box(b);
    const double x1 = std::min(b.x + b.w, 1.0);
    const double y1 = std::min(b.y + b.h, 1.0);
    const double x0 = std::max(b.x, 0.0);
    const double y0 = std::max(b.y, 0.0);
    const double area = (x1 - x0) * (y1 - y0);
    const int r_begin = std::clamp(static_cast<int>(std::floor(y0 * grid)), 0, grid - 1);
    const int r_end = std::clamp(static_cast<int>(std::ceil(y1 * grid)), 1, grid);
    const int c_begin = std::clamp(static_cast<int>(std::floor(x0 * grid)), 0, grid - 1);
    const int c_end = std::clamp(static_cast<int>(std::ceil(x1 * grid)), 1, grid);
    for (int r = r_begin; r < r_end; ++r) {
      const double oy = std::min(y1, (r + 1) * cell) - std::max(y0, r * cell);
      if (oy <= 0.0) continue;
      for (int c = c_begin; c < c_end; ++c) {
        const double ox = std::min(x1, (c + 1) * cell) - std::max(x0, c * cell);
        if (ox <= 0.0) continue;
        out.at(r, c) += weights[k] * (ox * oy) / area;
      }
    }
  }
  return out;
}

AttentionGrid rasterize(std::span<const Box> boxes, std::span<const double> weights, int grid) {
  AttentionGrid g = rasterize_raw(boxes, weights, grid);
  g.normalize();
  return g;
}

double ground_distance(int grid, int cell_a, int cell_b) {
  const int dr = cell_a / grid - cell_b / grid;
  const int dc = cell_a % grid - cell_b % grid;
  return std::sqrt(static_cast<double>(dr * dr + dc * dc));
}

double emd(const AttentionGrid& p, const AttentionGrid& q) {
  if (p.size != q.size) throw DataError("emd: grids differ in size");
  for (const AttentionGrid* g : {&p, &q}) {
    const double t = g->total();
    if (std::abs(t - 1.0) > 1e-6) {
      std::ostringstream os;
      os << "emd: grid not normalized (total mass " << t << ")";
      throw DataError(os.str());
    }
    for (double v : g->cells) {
      if (v < 0.0) throw DataError("emd: negative mass");
    }
  }

  std::vector<int> src_cells;
  std::vector<int> dst_cells;
  std::vector<double> supply;
  std::vector<double> demand;
  for (int i = 0; i < static_cast<int>(p.cells.size()); ++i) {
    if (p.cells[static_cast<std::size_t>(i)] > kMassFloor) {
      src_cells.push_back(i);
      supply.push_back(p.cells[static_cast<std::size_t>(i)]);
    }
    if (q.cells[static_cast<std::size_t>(i)] > kMassFloor) {
      dst_cells.push_back(i);
      demand.push_back(q.cells[static_cast<std::size_t>(i)]);
    }
  }
  if (supply.empty() || demand.empty()) throw DataError("emd: empty support");
  double sp = 0.0;
  double dm = 0.0;
  for (double v : supply) sp += v;
  for (double v : demand) dm += v;
  for (double& v : supply) v /= sp;
  for (double& v : demand) v /= dm;

  const int S = static_cast<int>(supply.size());
  const int D = static_cast<int>(demand.size());
  std::vector<double> dist_real(static_cast<std::size_t>(S) * D);
  std::vector<std::int64_t> cost(static_cast<std::size_t>(S) * D);
  for (int s = 0; s < S; ++s) {
    for (int d = 0; d < D; ++d) {
      const double g = ground_distance(p.size, src_cells[static_cast<std::size_t>(s)], dst_cells[static_cast<std::size_t>(d)]);
      dist_real[static_cast<std::size_t>(s) * D + d] = g;
      cost[static_cast<std::size_t>(s) * D + d] = std::llround(g * kCostScale);
    }
  }

  // Node layout: supplies [0, S), demands [S, S + D), source S + D, sink S + D + 1.
  const int V = S + D + 2;
  const int source = S + D;
  const int sink = S + D + 1;
  std::vector<double> flow(static_cast<std::size_t>(S) * D, 0.0);
  std::vector<std::int64_t> potential(static_cast<std::size_t>(V), 0);
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> dist(static_cast<std::size_t>(V));
  std::vector<int> parent(static_cast<std::size_t>(V));
  std::vector<char> done(static_cast<std::size_t>(V));

  auto pot = [&](int v) { return potential[static_cast<std::size_t>(v)]; };

  for (;;) {
    double remaining = 0.0;
    for (double v : supply) remaining += v;
    if (remaining <= 1e-15) break;

    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[static_cast<std::size_t>(source)] = 0;
    auto relax = [&](int u, int v, std::int64_t reduced) {
      const std::int64_t nd = dist[static_cast<std::size_t>(u)] + reduced;
      if (nd < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = nd;
        parent[static_cast<std::size_t>(v)] = u;
      }
    };
    for (;;) {
      int u = -1;
      for (int v = 0; v < V; ++v) {
        if (!done[static_cast<std::size_t>(v)] && dist[static_cast<std::size_t>(v)] < kInf &&
            (u < 0 || dist[static_cast<std::size_t>(v)] < dist[static_cast<std::size_t>(u)])) {
          u = v;
        }
      }
      if (u < 0 || u == sink) break;
      done[static_cast<std::size_t>(u)] = 1;
      if (u == source) {
        for (int s = 0; s < S; ++s) {
          if (supply[static_cast<std::size_t>(s)] > 0.0) relax(u, s, pot(source) - pot(s));
        }
      } else if (u < S) {
        for (int d = 0; d < D; ++d) relax(u, S + d, cost[static_cast<std::size_t>(u) * D + d] + pot(u) - pot(S + d));
      } else {
        const int d = u - S;
        for (int s = 0; s < S; ++s) {
          if (flow[static_cast<std::size_t>(s) * D + d] > 0.0) {
            relax(u, s, -cost[static_cast<std::size_t>(s) * D + d] + pot(u) - pot(s));
          }
        }
        if (demand[static_cast<std::size_t>(d)] > 0.0) relax(u, sink, pot(u) - pot(sink));
      }
    }
    const std::int64_t dsink = dist[static_cast<std::size_t>(sink)];
    if (dsink >= kInf) break;
    for (int v = 0; v < V; ++v) potential[static_cast<std::size_t>(v)] += std::min(dist[static_cast<std::size_t>(v)], dsink);

    // Bottleneck along the path sink <- d <- s <- ... <- s0 <- source.
    double push = std::numeric_limits<double>::infinity();
    for (int v = sink; v != source;) {
      const int u = parent[static_cast<std::size_t>(v)];
      if (v == sink) {
        push = std::min(push, demand[static_cast<std::size_t>(u - S)]);
      } else if (u == source) {
        push = std::min(push, supply[static_cast<std::size_t>(v)]);
      } else if (u >= S && v < S) {
        push = std::min(push, flow[static_cast<std::size_t>(v) * D + (u - S)]);
      }
      v = u;
    }
    for (int v = sink; v != source;) {
      const int u = parent[static_cast<std::size_t>(v)];
      if (v == sink) {
        demand[static_cast<std::size_t>(u - S)] -= push;
      } else if (u == source) {
        supply[static_cast<std::size_t>(v)] -= push;
      } else if (u < S) {
        flow[static_cast<std::size_t>(u) * D + (v - S)] += push;
      } else {
        flow[static_cast<std::size_t>(v) * D + (u - S)] -= push;
      }
      v = u;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < flow.size(); ++i) total += flow[i] * dist_real[i];
  return total;
}

}  // namespace relcap::attn
