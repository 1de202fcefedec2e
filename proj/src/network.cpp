#include "dbsn/network.hpp"

#include <cmath>
#include <stdexcept>

namespace dbsn {

OpKind op_kind_from_string(const std::string& s) {
  if (s == "zero") return OpKind::Zero;
  if (s == "identity") return OpKind::Identity;
  if (s == "affine") return OpKind::Affine;
  if (s == "affine_relu") return OpKind::AffineRelu;
  throw std::invalid_argument("unknown op kind: " + s);
}

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::Zero: return "zero";
    case OpKind::Identity: return "identity";
    case OpKind::Affine: return "affine";
    case OpKind::AffineRelu: return "affine_relu";
  }
  return "?";
}

void NetworkSpec::validate() const {
  if (cell.num_nodes < 2) throw std::invalid_argument("network: need B >= 2 nodes");
  if (cell.ops_per_edge() < 2) throw std::invalid_argument("network: need K >= 2 ops per edge");
  if (cell.node_width < 1) throw std::invalid_argument("network: node_width must be >= 1");
  if (input_dim < 1 || num_classes < 2 || num_cells < 1) {
    throw std::invalid_argument("network: bad dimensions");
  }
  if (!(downsample_factor > 0.0)) throw std::invalid_argument("network: downsample factor must be > 0");
}

std::vector<int> NetworkSpec::cell_widths() const {
  std::vector<int> widths(num_cells);
  int w = cell.node_width;
  for (int c = 0; c < num_cells; ++c) {
    widths[c] = w;
    const int out = cell.num_nodes * w;
    w = static_cast<int>(std::ceil(downsample_factor * out));
  }
  return widths;
}

int NetworkSpec::final_width() const { return cell.num_nodes * cell_widths().back(); }

StructureLogits StructureLogits::init(const CellSpec& cell, std::uint64_t seed, double stddev) {
  StructureLogits logits;
  const int k = cell.ops_per_edge();
  for (int e = 0; e < cell.num_edges(); ++e) {
    Rng rng = substream(seed, {stream::kInit, 1000u + static_cast<std::uint64_t>(e)});
    std::vector<double> v(k);
    for (int i = 0; i < k; ++i) v[i] = stddev * rng.normal();
    logits.theta.push_back(Tensor::leaf({k}, std::move(v), true));
  }
  return logits;
}

StructureSample sample_structure(const StructureLogits& logits, const SharpTemp& st,
                                 std::uint64_t seed, std::uint64_t step, std::uint64_t mc_sample) {
  StructureSample out;
  out.edges.reserve(logits.theta.size());
  for (std::size_t e = 0; e < logits.theta.size(); ++e) {
    Rng rng = substream(seed, {stream::kGumbel, step, mc_sample, static_cast<std::uint64_t>(e)});
    Tensor eps = sample_gumbel(logits.theta[e].shape()[0], rng);
    out.edges.push_back(sample_sharpened(logits.theta[e], st, eps));
  }
  return out;
}

StructureSample uniform_structure(const CellSpec& cell) {
  StructureSample out;
  const int k = cell.ops_per_edge();
  std::vector<double> alpha(k, 1.0 / k);
  for (int e = 0; e < cell.num_edges(); ++e) out.edges.push_back(edge_sample_from_alpha(alpha));
  return out;
}

StructureSample point_structure(const StructureLogits& logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("point_structure: tau must be > 0");
  StructureSample out;
  for (const Tensor& theta : logits.theta) {
    EdgeSample s;
    s.log_alpha = log_softmax(mul_scalar(theta, 1.0 / tau), 0);
    s.alpha = exp(s.log_alpha);
    out.edges.push_back(std::move(s));
  }
  return out;
}

Tensor structure_kl_term(const StructureSample& sample, const StructureLogits& logits,
                         const SharpTemp& st, double tau_prior) {
  if (sample.edges.size() != logits.theta.size()) {
    throw std::invalid_argument("structure_kl_term: edge count mismatch");
  }
  Tensor total;
  for (std::size_t e = 0; e < sample.edges.size(); ++e) {
    Tensor term = kl_mc_term(sample.edges[e], logits.theta[e], st, tau_prior);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

namespace {

AffineParam make_affine(int in, int out, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(in) * out);
  const double stddev = std::sqrt(2.0 / in);
  for (auto& x : w) x = stddev * rng.normal();
  AffineParam p;
  p.weight = Tensor::leaf({in, out}, std::move(w), true);
  p.bias = Tensor::zeros({out}, true);
  return p;
}

bool op_has_params(OpKind k) { return k == OpKind::Affine || k == OpKind::AffineRelu; }

void collect(const AffineParam& p, const std::string& name,
             std::vector<std::pair<std::string, Tensor>>& out) {
  if (!p.defined()) return;
  out.emplace_back(name + ".weight", p.weight);
  out.emplace_back(name + ".bias", p.bias);
}

}  // namespace

WeightStore WeightStore::init(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  WeightStore w;
  std::uint64_t counter = 0;
  auto next_rng = [&] { return substream(seed, {stream::kInit, counter++}); };

  const std::vector<int> widths = spec.cell_widths();
  {
    Rng rng = next_rng();
    w.stem = make_affine(spec.input_dim, widths[0], rng);
  }
  w.edge_ops.resize(spec.num_cells);
  for (int c = 0; c < spec.num_cells; ++c) {
    const int width = widths[c];
    w.edge_ops[c].resize(spec.cell.num_edges());
    for (int e = 0; e < spec.cell.num_edges(); ++e) {
      auto& ops = w.edge_ops[c][e];
      ops.resize(spec.cell.ops_per_edge());
      for (int k = 0; k < spec.cell.ops_per_edge(); ++k) {
        if (op_has_params(spec.cell.op_kinds[k])) {
          Rng rng = next_rng();
          ops[k] = make_affine(width, width, rng);
        }
      }
    }
    if (c + 1 < spec.num_cells) {
      Rng rng = next_rng();
      w.downsample.push_back(make_affine(spec.cell.num_nodes * width, widths[c + 1], rng));
    }
  }
  {
    Rng rng = next_rng();
    w.head = make_affine(spec.final_width(), spec.num_classes, rng);
  }
  return w;
}

std::vector<std::pair<std::string, Tensor>> WeightStore::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect(stem, "stem", out);
  for (std::size_t c = 0; c < edge_ops.size(); ++c) {
    for (std::size_t e = 0; e < edge_ops[c].size(); ++e) {
      for (std::size_t k = 0; k < edge_ops[c][e].size(); ++k) {
        collect(edge_ops[c][e][k],
                "cell" + std::to_string(c) + ".edge" + std::to_string(e) + ".op" + std::to_string(k),
                out);
      }
    }
  }
  for (std::size_t d = 0; d < downsample.size(); ++d) {
    collect(downsample[d], "down" + std::to_string(d), out);
  }
  collect(head, "head", out);
  return out;
}

std::vector<Tensor> WeightStore::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

WeightStore WeightStore::transformed(const std::function<Tensor(const Tensor&, std::size_t)>& fn) const {
  WeightStore out;
  std::size_t idx = 0;
  auto apply = [&fn, &idx](const AffineParam& p) {
    AffineParam q;
    if (p.defined()) {
      q.weight = fn(p.weight, idx++);
      q.bias = fn(p.bias, idx++);
    }
    return q;
  };
  out.stem = apply(stem);
  out.edge_ops.resize(edge_ops.size());
  for (std::size_t c = 0; c < edge_ops.size(); ++c) {
    out.edge_ops[c].resize(edge_ops[c].size());
    for (std::size_t e = 0; e < edge_ops[c].size(); ++e) {
      for (const auto& op : edge_ops[c][e]) out.edge_ops[c][e].push_back(apply(op));
    }
  }
  for (const auto& d : downsample) out.downsample.push_back(apply(d));
  out.head = apply(head);
  return out;
}

namespace {

Tensor affine_forward(const Tensor& x, const AffineParam& p) {
  return add_bias(matmul(x, p.weight), p.bias);
}

Tensor maybe_dropout(Tensor t, const DropoutCtx* ctx) {
  if (!ctx || ctx->rate <= 0.0) return t;
  Rng rng = substream(ctx->seed, {stream::kDropout, ctx->counter++});
  std::vector<double> mask(t.values().size());
  for (auto& m : mask) m = rng.uniform() >= ctx->rate ? 1.0 : 0.0;
  Tensor mask_t = Tensor::leaf(t.shape(), std::move(mask));
  return dropout(t, mask_t, 1.0 - ctx->rate);
}

}  // namespace

Tensor edge_forward(const Tensor& input, const Tensor& alpha,
                    const std::vector<AffineParam>& edge_weights,
                    const std::vector<OpKind>& kinds, const DropoutCtx* dropout) {
  if (input.rank() != 2) throw std::invalid_argument("edge_forward: input must be [batch, width]");
  if (alpha.rank() != 1 || alpha.shape()[0] != static_cast<int>(kinds.size())) {
    throw std::invalid_argument("edge_forward: alpha/ops length mismatch");
  }
  Tensor acc;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    Tensor op_out;
    switch (kinds[k]) {
      case OpKind::Zero:
        continue;  // contributes nothing to the mix or to d/d alpha_k
      case OpKind::Identity:
        op_out = input;
        break;
      case OpKind::Affine:
        op_out = maybe_dropout(affine_forward(input, edge_weights[k]), dropout);
        break;
      case OpKind::AffineRelu:
        op_out = maybe_dropout(relu(affine_forward(input, edge_weights[k])), dropout);
        break;
    }
    Tensor term = scale(op_out, index(alpha, static_cast<int>(k)));
    acc = acc.defined() ? add(acc, term) : term;
  }
  if (!acc.defined()) return Tensor::zeros({input.shape()[0], input.shape()[1]});
  return acc;
}

Tensor cell_forward(const Tensor& cell_input, const StructureSample& alpha,
                    const std::vector<std::vector<AffineParam>>& cell_weights,
                    const CellSpec& cell, const DropoutCtx* dropout) {
  if (cell_input.rank() != 2) throw std::invalid_argument("cell_forward: input must be rank-2");
  if (static_cast<int>(cell_weights.size()) != cell.num_edges()) {
    throw std::invalid_argument("cell_forward: weight edge count mismatch");
  }
  if (static_cast<int>(alpha.edges.size()) != cell.num_edges()) {
    throw std::invalid_argument("cell_forward: structure edge count mismatch");
  }
  std::vector<Tensor> nodes(cell.num_nodes);
  nodes[0] = cell_input;
  for (int j = 1; j < cell.num_nodes; ++j) {
    Tensor acc;
    for (int i = 0; i < j; ++i) {
      const int e = edge_index(i, j);
      Tensor msg = edge_forward(nodes[i], alpha.edges[e].alpha, cell_weights[e], cell.op_kinds,
                                dropout);
      acc = acc.defined() ? add(acc, msg) : msg;
    }
    if (cell.normalize) acc = normalize_rows(acc, 1e-5);
    nodes[j] = acc;
  }
  std::vector<Tensor> parts(nodes.begin() + 1, nodes.end());
  parts.push_back(cell_input);
  return concat(parts, 1);
}

Tensor network_forward(const Tensor& x, const StructureSample& alpha, const WeightStore& w,
                       const NetworkSpec& spec, const DropoutCtx* dropout) {
  if (x.rank() != 2 || x.shape()[1] != spec.input_dim) {
    throw std::invalid_argument("network_forward: input width != input_dim");
  }
  Tensor h = maybe_dropout(affine_forward(x, w.stem), dropout);
  for (int c = 0; c < spec.num_cells; ++c) {
    h = cell_forward(h, alpha, w.edge_ops[c], spec.cell, dropout);
    if (c + 1 < spec.num_cells) h = maybe_dropout(affine_forward(h, w.downsample[c]), dropout);
  }
  return affine_forward(h, w.head);
}

}  // namespace dbsn
