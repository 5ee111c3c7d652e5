#include "infodemic/nn/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace infodemic::nn {
namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;
using CMapStrided = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
using MapStrided = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;

CMapM view(const NdArray& a, std::size_t rows, std::size_t cols) {
  return CMapM(a.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MapM view(NdArray& a, std::size_t rows, std::size_t cols) {
  return MapM(a.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                     to_string(t.shape()));
  }
}

bool any_grad(Graph& g, std::initializer_list<std::size_t> ids) {
  for (auto id : ids) {
    if (g.requires_grad(id)) return true;
  }
  return false;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, Activation activation) {
  require_rank(x, 2, "dense");
  require_rank(w, 2, "dense");
  require_rank(b, 1, "dense");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in || b.dim(0) != out) {
    throw ShapeError("dense: x " + to_string(x.shape()) + ", W " + to_string(w.shape()) + ", b " +
                     to_string(b.shape()) + " do not agree");
  }
  Graph& g = x.graph();
  NdArray y({batch, out});
  auto Y = view(y, batch, out);
  Y.noalias() = view(x.value(), batch, in) * view(w.value(), in, out);
  Y.rowwise() += view(b.value(), 1, out).row(0);
  if (activation == Activation::relu) Y = Y.cwiseMax(0.0);

  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return g.record(std::move(y), any_grad(g, {xi, wi, bi}),
                  [=](Graph& g, std::size_t self) {
                    Mat dz = view(g.grad(self), batch, out);
                    if (activation == Activation::relu) {
                      dz = dz.cwiseProduct((view(g.value(self), batch, out).array() > 0.0).cast<double>().matrix());
                    }
                    if (auto* dx = g.grad_mut(xi)) view(*dx, batch, in).noalias() += dz * view(g.value(wi), in, out).transpose();
                    if (auto* dw = g.grad_mut(wi)) view(*dw, in, out).noalias() += view(g.value(xi), batch, in).transpose() * dz;
                    if (auto* db = g.grad_mut(bi)) view(*db, 1, out) += dz.colwise().sum();
                  },
                  "dense");
}

Tensor sparse_dense(const SparseMatrix& x, const Tensor& w, const Tensor& b, Activation activation) {
  require_rank(w, 2, "sparse_dense");
  require_rank(b, 1, "sparse_dense");
  const std::size_t batch = x.rows(), in = x.cols(), out = w.dim(1);
  if (w.dim(0) != in || b.dim(0) != out) {
    throw ShapeError("sparse_dense: input width " + std::to_string(in) + " vs W " + to_string(w.shape()));
  }
  Graph& g = w.graph();
  NdArray y({batch, out});
  const auto& W = w.value().data;
  const auto& B = b.value().data;
  for (std::size_t r = 0; r < batch; ++r) {
    double* row = y.data.data() + r * out;
    std::copy(B.begin(), B.end(), row);
    for (const auto& e : x.row(r)) {
      const double* wrow = W.data() + static_cast<std::size_t>(e.index) * out;
      for (std::size_t o = 0; o < out; ++o) row[o] += e.weight * wrow[o];
    }
    if (activation == Activation::relu) {
      for (std::size_t o = 0; o < out; ++o) row[o] = std::max(row[o], 0.0);
    }
  }
  const std::size_t wi = w.id(), bi = b.id();
  return g.record(std::move(y), any_grad(g, {wi, bi}),
                  [=](Graph& g, std::size_t self) {
                    std::vector<double> dz = g.grad(self).data;
                    if (activation == Activation::relu) {
                      const auto& yv = g.value(self).data;
                      for (std::size_t k = 0; k < dz.size(); ++k) {
                        if (yv[k] <= 0.0) dz[k] = 0.0;
                      }
                    }
                    if (auto* dw = g.grad_mut(wi)) {
                      for (std::size_t r = 0; r < batch; ++r) {
                        const double* drow = dz.data() + r * out;
                        for (const auto& e : x.row(r)) {
                          double* dwrow = dw->data.data() + static_cast<std::size_t>(e.index) * out;
                          for (std::size_t o = 0; o < out; ++o) dwrow[o] += e.weight * drow[o];
                        }
                      }
                    }
                    if (auto* db = g.grad_mut(bi)) {
                      for (std::size_t r = 0; r < batch; ++r) {
                        for (std::size_t o = 0; o < out; ++o) db->data[o] += dz[r * out + o];
                      }
                    }
                  },
                  "sparse_dense");
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  Graph& g = x.graph();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  std::vector<double> mask(x.value().size());
  for (auto& m : mask) m = drop(rng) ? 0.0 : keep_scale;
  NdArray y(x.shape());
  for (std::size_t k = 0; k < mask.size(); ++k) y.data[k] = x.value().data[k] * mask[k];
  const std::size_t xi = x.id();
  return g.record(std::move(y), g.requires_grad(xi),
                  [xi, mask = std::move(mask)](Graph& g, std::size_t self) {
                    auto* dx = g.grad_mut(xi);
                    const auto& dy = g.grad(self).data;
                    for (std::size_t k = 0; k < mask.size(); ++k) dx->data[k] += dy[k] * mask[k];
                  },
                  "dropout");
}

Tensor embedding(std::span<const std::uint32_t> indices, std::size_t batch, std::size_t time, const Tensor& table) {
  require_rank(table, 2, "embedding");
  if (indices.size() != batch * time) throw ShapeError("embedding: index count does not match batch x time");
  const std::size_t vocab = table.dim(0), dim = table.dim(1);
  Graph& g = table.graph();
  NdArray y({batch, time, dim});
  const auto& T = table.value().data;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= vocab) throw ShapeError("embedding: index " + std::to_string(indices[k]) + " out of range");
    std::copy_n(T.data() + static_cast<std::size_t>(indices[k]) * dim, dim, y.data.data() + k * dim);
  }
  const std::size_t ti = table.id();
  std::vector<std::uint32_t> idx(indices.begin(), indices.end());
  return g.record(std::move(y), g.requires_grad(ti),
                  [ti, dim, idx = std::move(idx)](Graph& g, std::size_t self) {
                    auto* dt = g.grad_mut(ti);
                    const auto& dy = g.grad(self).data;
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      if (idx[k] == 0) continue;
                      double* dst = dt->data.data() + static_cast<std::size_t>(idx[k]) * dim;
                      const double* src = dy.data() + k * dim;
                      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
                    }
                  },
                  "embedding");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.value().size()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  Graph& g = x.graph();
  NdArray y(std::move(shape), x.value().data);
  const std::size_t xi = x.id();
  return g.record(std::move(y), g.requires_grad(xi),
                  [xi](Graph& g, std::size_t self) {
                    auto* dx = g.grad_mut(xi);
                    const auto& dy = g.grad(self).data;
                    for (std::size_t k = 0; k < dy.size(); ++k) dx->data[k] += dy[k];
                  },
                  "reshape");
}

Tensor flatten(const Tensor& x) {
  if (x.shape().size() < 2) throw ShapeError("flatten needs a batch axis");
  if (x.shape().size() == 2) return x;
  return reshape(x, {x.dim(0), x.value().size() / x.dim(0)});
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& b) {
  require_rank(x, 3, "conv1d");
  require_rank(kernels, 3, "conv1d");
  require_rank(b, 1, "conv1d");
  const std::size_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  const std::size_t width = kernels.dim(0), filters = kernels.dim(2);
  if (kernels.dim(1) != ch || b.dim(0) != filters) {
    throw ShapeError("conv1d: x " + to_string(x.shape()) + ", kernels " + to_string(kernels.shape()));
  }
  if (time < width) {
    throw ShapeError("conv1d: sequence of " + std::to_string(time) + " steps is shorter than kernel width " +
                     std::to_string(width));
  }
  const std::size_t steps = time - width + 1, span = width * ch;
  Graph& g = x.graph();
  NdArray y({batch, steps, filters});
  auto K = view(kernels.value(), span, filters);
  auto bias = view(b.value(), 1, filters).row(0);
  for (std::size_t n = 0; n < batch; ++n) {
    CMapStrided cols(x.value().data.data() + n * time * ch, ix(steps), ix(span), Eigen::OuterStride<>(ix(ch)));
    MapM Y(y.data.data() + n * steps * filters, ix(steps), ix(filters));
    Y.noalias() = cols * K;
    Y.rowwise() += bias;
    Y = Y.cwiseMax(0.0);
  }
  const std::size_t xi = x.id(), ki = kernels.id(), bi = b.id();
  return g.record(std::move(y), any_grad(g, {xi, ki, bi}),
                  [=](Graph& g, std::size_t self) {
                    auto* dx = g.grad_mut(xi);
                    auto* dk = g.grad_mut(ki);
                    auto* db = g.grad_mut(bi);
                    auto Kv = view(g.value(ki), span, filters);
                    Mat dz(ix(steps), ix(filters));
                    Mat dcols;
                    for (std::size_t n = 0; n < batch; ++n) {
                      dz = CMapM(g.grad(self).data.data() + n * steps * filters, ix(steps), ix(filters));
                      CMapM yv(g.value(self).data.data() + n * steps * filters, ix(steps), ix(filters));
                      dz = dz.cwiseProduct((yv.array() > 0.0).cast<double>().matrix());
                      CMapStrided cols(g.value(xi).data.data() + n * time * ch, ix(steps), ix(span),
                                       Eigen::OuterStride<>(ix(ch)));
                      if (dk) view(*dk, span, filters).noalias() += cols.transpose() * dz;
                      if (db) view(*db, 1, filters) += dz.colwise().sum();
                      if (dx) {
                        dcols.noalias() = dz * Kv.transpose();
                        double* base = dx->data.data() + n * time * ch;
                        for (std::size_t t = 0; t < steps; ++t) {
                          double* dst = base + t * ch;
                          const double* src = dcols.data() + t * span;
                          for (std::size_t k = 0; k < span; ++k) dst[k] += src[k];
                        }
                      }
                    }
                  },
                  "conv1d");
}

Tensor avgpool1d(const Tensor& x, std::size_t window) {
  require_rank(x, 3, "avgpool1d");
  if (window == 0) throw ConfigError("avgpool1d window must be at least 1");
  const std::size_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  if (time < window) throw ShapeError("avgpool1d: window larger than the sequence");
  const std::size_t steps = time / window;
  Graph& g = x.graph();
  NdArray y({batch, steps, ch});
  const auto& X = x.value().data;
  const double inv = 1.0 / static_cast<double>(window);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t s = 0; s < steps; ++s) {
      double* dst = y.data.data() + (n * steps + s) * ch;
      for (std::size_t k = 0; k < window; ++k) {
        const double* src = X.data() + (n * time + s * window + k) * ch;
        for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c] * inv;
      }
    }
  }
  const std::size_t xi = x.id();
  return g.record(std::move(y), g.requires_grad(xi),
                  [=](Graph& g, std::size_t self) {
                    auto* dx = g.grad_mut(xi);
                    const auto& dy = g.grad(self).data;
                    for (std::size_t n = 0; n < batch; ++n) {
                      for (std::size_t s = 0; s < steps; ++s) {
                        const double* src = dy.data() + (n * steps + s) * ch;
                        for (std::size_t k = 0; k < window; ++k) {
                          double* dst = dx->data.data() + (n * time + s * window + k) * ch;
                          for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c] * inv;
                        }
                      }
                    }
                  },
                  "avgpool1d");
}

Tensor global_avgpool1d(const Tensor& x) {
  require_rank(x, 3, "global_avgpool1d");
  const std::size_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  if (time == 0) throw ShapeError("global_avgpool1d: empty sequence");
  Graph& g = x.graph();
  NdArray y({batch, ch});
  const double inv = 1.0 / static_cast<double>(time);
  for (std::size_t n = 0; n < batch; ++n) {
    MapM(y.data.data() + n * ch, 1, ix(ch)) = CMapM(x.value().data.data() + n * time * ch, ix(time), ix(ch)).colwise().sum() * inv;
  }
  const std::size_t xi = x.id();
  return g.record(std::move(y), g.requires_grad(xi),
                  [=](Graph& g, std::size_t self) {
                    auto* dx = g.grad_mut(xi);
                    auto dy = view(g.grad(self), batch, ch);
                    for (std::size_t n = 0; n < batch; ++n) {
                      MapM(dx->data.data() + n * time * ch, ix(time), ix(ch)).rowwise() += dy.row(ix(n)) * inv;
                    }
                  },
                  "global_avgpool1d");
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t batch = parts[0].dim(0);
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat");
    if (p.dim(0) != batch) throw ShapeError("concat: batch sizes differ");
    ids.push_back(p.id());
    widths.push_back(p.dim(1));
    total += p.dim(1);
    needs_grad = needs_grad || p.graph().requires_grad(p.id());
  }
  Graph& g = parts[0].graph();
  NdArray y({batch, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    view(y, batch, total).middleCols(ix(offset), ix(p.dim(1))) = view(p.value(), batch, p.dim(1));
    offset += p.dim(1);
  }
  return g.record(std::move(y), needs_grad,
                  [=](Graph& g, std::size_t self) {
                    std::size_t off = 0;
                    auto dy = view(g.grad(self), batch, total);
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (auto* dx = g.grad_mut(ids[k])) view(*dx, batch, widths[k]) += dy.middleCols(ix(off), ix(widths[k]));
                      off += widths[k];
                    }
                  },
                  "concat");
}

namespace {

struct RecurrentShapes {
  std::size_t batch, time, in, hidden;
};

RecurrentShapes check_recurrent(const Tensor& x, const RecurrentWeights& w, std::size_t gates,
                                std::span<const std::size_t> lengths, const char* op) {
  require_rank(x, 3, op);
  require_rank(w.input_kernel, 2, op);
  require_rank(w.recurrent_kernel, 2, op);
  require_rank(w.bias, 1, op);
  RecurrentShapes s{x.dim(0), x.dim(1), x.dim(2), w.recurrent_kernel.dim(0)};
  if (w.input_kernel.dim(0) != s.in || w.input_kernel.dim(1) != gates * s.hidden ||
      w.recurrent_kernel.dim(1) != gates * s.hidden || w.bias.dim(0) != gates * s.hidden) {
    throw ShapeError(std::string(op) + ": weights " + to_string(w.input_kernel.shape()) + ", " +
                     to_string(w.recurrent_kernel.shape()) + ", " + to_string(w.bias.shape()) +
                     " do not fit input " + to_string(x.shape()));
  }
  if (!lengths.empty() && lengths.size() != s.batch) throw ShapeError(std::string(op) + ": one length per row");
  if (s.time == 0) throw ShapeError(std::string(op) + ": empty sequence");
  return s;
}

// Row mask for step t: 1 while the row is still inside its true length.
Vec step_mask(std::span<const std::size_t> lengths, std::size_t batch, std::size_t t) {
  Vec m(ix(batch));
  for (std::size_t n = 0; n < batch; ++n) m[ix(n)] = (lengths.empty() || t < lengths[n]) ? 1.0 : 0.0;
  return m;
}

// Input projections for every (row, step): [batch*time, gates*hidden].
Mat project_inputs(const Tensor& x, const RecurrentWeights& w, const RecurrentShapes& s, std::size_t gates) {
  Mat xp = view(x.value(), s.batch * s.time, s.in) * view(w.input_kernel.value(), s.in, gates * s.hidden);
  xp.rowwise() += view(w.bias.value(), 1, gates * s.hidden).row(0);
  return xp;
}

// The rows of `xp` belonging to step t, one per batch row.
CMapStrided step_rows(const Mat& xp, const RecurrentShapes& s, std::size_t gates, std::size_t t) {
  return CMapStrided(xp.data() + t * gates * s.hidden, ix(s.batch), ix(gates * s.hidden),
                     Eigen::OuterStride<>(ix(s.time * gates * s.hidden)));
}

NdArray recurrent_output(const std::vector<Mat>& states, const RecurrentShapes& s, bool return_sequence) {
  if (!return_sequence) {
    NdArray y({s.batch, s.hidden});
    view(y, s.batch, s.hidden) = states.back();
    return y;
  }
  NdArray y({s.batch, s.time, s.hidden});
  for (std::size_t t = 0; t < s.time; ++t) {
    MapStrided(y.data.data() + t * s.hidden, ix(s.batch), ix(s.hidden), Eigen::OuterStride<>(ix(s.time * s.hidden))) =
        states[t + 1];
  }
  return y;
}

// Upstream gradient for step t.
Mat step_output_grad(const NdArray& dy, const RecurrentShapes& s, bool return_sequence, std::size_t t) {
  if (!return_sequence) {
    return t + 1 == s.time ? Mat(view(dy, s.batch, s.hidden)) : Mat::Zero(ix(s.batch), ix(s.hidden));
  }
  return CMapStrided(dy.data.data() + t * s.hidden, ix(s.batch), ix(s.hidden),
                     Eigen::OuterStride<>(ix(s.time * s.hidden)));
}

void accumulate_input_grads(Graph& g, std::size_t xi, std::size_t wi, std::size_t bi, const Mat& dxp,
                            const RecurrentShapes& s, std::size_t gates) {
  const std::size_t cols = gates * s.hidden;
  if (auto* dw = g.grad_mut(wi)) view(*dw, s.in, cols).noalias() += view(g.value(xi), s.batch * s.time, s.in).transpose() * dxp;
  if (auto* db = g.grad_mut(bi)) view(*db, 1, cols) += dxp.colwise().sum();
  if (auto* dx = g.grad_mut(xi)) view(*dx, s.batch * s.time, s.in).noalias() += dxp * view(g.value(wi), s.in, cols).transpose();
}

void scatter_step(Mat& dxp, const Mat& step_grad, const RecurrentShapes& s, std::size_t gates, std::size_t t) {
  MapStrided(dxp.data() + t * gates * s.hidden, ix(s.batch), ix(gates * s.hidden),
             Eigen::OuterStride<>(ix(s.time * gates * s.hidden))) = step_grad;
}

}  // namespace

Tensor gru(const Tensor& x, const RecurrentWeights& w, std::span<const std::size_t> lengths, bool return_sequence) {
  const RecurrentShapes s = check_recurrent(x, w, 3, lengths, "gru");
  const std::size_t H = s.hidden;
  Graph& g = x.graph();
  const Mat xp = project_inputs(x, w, s, 3);
  auto U = view(w.recurrent_kernel.value(), H, 3 * H);

  // states[t] is the state entering step t; states[time] is the final state.
  std::vector<Mat> states(s.time + 1), z(s.time), r(s.time), cand(s.time);
  std::vector<Vec> masks(s.time);
  states[0] = Mat::Zero(ix(s.batch), ix(H));
  for (std::size_t t = 0; t < s.time; ++t) {
    const Mat& h = states[t];
    auto xt = step_rows(xp, s, 3, t);
    Mat zr = xt.leftCols(ix(2 * H)) + h * U.leftCols(ix(2 * H));
    z[t] = zr.leftCols(ix(H)).unaryExpr([](double v) { return sigmoid(v); });
    r[t] = zr.rightCols(ix(H)).unaryExpr([](double v) { return sigmoid(v); });
    Mat a = xt.rightCols(ix(H)) + r[t].cwiseProduct(h) * U.rightCols(ix(H));
    cand[t] = a.array().tanh().matrix();
    masks[t] = step_mask(lengths, s.batch, t);
    Mat next = (1.0 - z[t].array()).matrix().cwiseProduct(h) + z[t].cwiseProduct(cand[t]);
    states[t + 1] = masks[t].asDiagonal() * next + (1.0 - masks[t].array()).matrix().asDiagonal() * h;
  }
  NdArray y = recurrent_output(states, s, return_sequence);

  const std::size_t xi = x.id(), wi = w.input_kernel.id(), ui = w.recurrent_kernel.id(), bi = w.bias.id();
  return g.record(
      std::move(y), any_grad(g, {xi, wi, ui, bi}),
      [=, states = std::move(states), z = std::move(z), r = std::move(r), cand = std::move(cand),
       masks = std::move(masks)](Graph& g, std::size_t self) {
        auto Uv = view(g.value(ui), H, 3 * H);
        Mat dU = Mat::Zero(ix(H), ix(3 * H));
        Mat dxp = Mat::Zero(ix(s.batch * s.time), ix(3 * H));
        Mat dh = Mat::Zero(ix(s.batch), ix(H));
        Mat step_grad(ix(s.batch), ix(3 * H));
        const NdArray& dy = g.grad(self);
        for (std::size_t t = s.time; t-- > 0;) {
          dh += step_output_grad(dy, s, return_sequence, t);
          const Mat& h = states[t];
          Mat dnew = masks[t].asDiagonal() * dh;
          Mat carry = (1.0 - masks[t].array()).matrix().asDiagonal() * dh;
          auto zt = z[t].array();
          auto rt = r[t].array();
          auto ct = cand[t].array();
          Mat da_z = (dnew.array() * (ct - h.array()) * zt * (1.0 - zt)).matrix();
          Mat da_h = (dnew.array() * zt * (1.0 - ct * ct)).matrix();
          Mat gated = r[t].cwiseProduct(h);
          dU.rightCols(ix(H)).noalias() += gated.transpose() * da_h;
          Mat ds = da_h * Uv.rightCols(ix(H)).transpose();
          Mat da_r = (ds.array() * h.array() * rt * (1.0 - rt)).matrix();
          step_grad << da_z, da_r, da_h;
          dU.leftCols(ix(2 * H)).noalias() += h.transpose() * step_grad.leftCols(ix(2 * H));
          dh = carry + (dnew.array() * (1.0 - zt)).matrix() + ds.cwiseProduct(r[t]) +
               step_grad.leftCols(ix(2 * H)) * Uv.leftCols(ix(2 * H)).transpose();
          scatter_step(dxp, step_grad, s, 3, t);
        }
        if (auto* du = g.grad_mut(ui)) view(*du, H, 3 * H) += dU;
        accumulate_input_grads(g, xi, wi, bi, dxp, s, 3);
      },
      "gru");
}

Tensor lstm(const Tensor& x, const RecurrentWeights& w, std::span<const std::size_t> lengths, bool return_sequence) {
  const RecurrentShapes s = check_recurrent(x, w, 4, lengths, "lstm");
  const std::size_t H = s.hidden;
  Graph& g = x.graph();
  const Mat xp = project_inputs(x, w, s, 4);
  auto U = view(w.recurrent_kernel.value(), H, 4 * H);

  std::vector<Mat> states(s.time + 1), cells(s.time + 1), gates(s.time), cell_tanh(s.time);
  std::vector<Vec> masks(s.time);
  states[0] = Mat::Zero(ix(s.batch), ix(H));
  cells[0] = Mat::Zero(ix(s.batch), ix(H));
  for (std::size_t t = 0; t < s.time; ++t) {
    const Mat& h = states[t];
    const Mat& c = cells[t];
    Mat a = step_rows(xp, s, 4, t) + h * U;
    Mat act(ix(s.batch), ix(4 * H));
    act.leftCols(ix(2 * H)) = a.leftCols(ix(2 * H)).unaryExpr([](double v) { return sigmoid(v); });
    act.middleCols(ix(2 * H), ix(H)) = a.middleCols(ix(2 * H), ix(H)).array().tanh().matrix();
    act.rightCols(ix(H)) = a.rightCols(ix(H)).unaryExpr([](double v) { return sigmoid(v); });
    Mat c_new = act.middleCols(ix(H), ix(H)).cwiseProduct(c) +
                act.leftCols(ix(H)).cwiseProduct(act.middleCols(ix(2 * H), ix(H)));
    cell_tanh[t] = c_new.array().tanh().matrix();
    Mat h_new = act.rightCols(ix(H)).cwiseProduct(cell_tanh[t]);
    masks[t] = step_mask(lengths, s.batch, t);
    const Vec keep = 1.0 - masks[t].array();
    states[t + 1] = masks[t].asDiagonal() * h_new + keep.asDiagonal() * h;
    cells[t + 1] = masks[t].asDiagonal() * c_new + keep.asDiagonal() * c;
    gates[t] = std::move(act);
  }
  NdArray y = recurrent_output(states, s, return_sequence);

  const std::size_t xi = x.id(), wi = w.input_kernel.id(), ui = w.recurrent_kernel.id(), bi = w.bias.id();
  return g.record(
      std::move(y), any_grad(g, {xi, wi, ui, bi}),
      [=, states = std::move(states), cells = std::move(cells), gates = std::move(gates),
       cell_tanh = std::move(cell_tanh), masks = std::move(masks)](Graph& g, std::size_t self) {
        auto Uv = view(g.value(ui), H, 4 * H);
        Mat dU = Mat::Zero(ix(H), ix(4 * H));
        Mat dxp = Mat::Zero(ix(s.batch * s.time), ix(4 * H));
        Mat dh = Mat::Zero(ix(s.batch), ix(H));
        Mat dc = Mat::Zero(ix(s.batch), ix(H));
        Mat step_grad(ix(s.batch), ix(4 * H));
        const NdArray& dy = g.grad(self);
        for (std::size_t t = s.time; t-- > 0;) {
          dh += step_output_grad(dy, s, return_sequence, t);
          const Vec keep = 1.0 - masks[t].array();
          Mat dh_new = masks[t].asDiagonal() * dh;
          Mat dc_new = masks[t].asDiagonal() * dc;
          auto i = gates[t].leftCols(ix(H)).array();
          auto f = gates[t].middleCols(ix(H), ix(H)).array();
          auto gg = gates[t].middleCols(ix(2 * H), ix(H)).array();
          auto o = gates[t].rightCols(ix(H)).array();
          auto tc = cell_tanh[t].array();
          Mat dct = (dc_new.array() + dh_new.array() * o * (1.0 - tc * tc)).matrix();
          step_grad.leftCols(ix(H)) = (dct.array() * gg * i * (1.0 - i)).matrix();
          step_grad.middleCols(ix(H), ix(H)) = (dct.array() * cells[t].array() * f * (1.0 - f)).matrix();
          step_grad.middleCols(ix(2 * H), ix(H)) = (dct.array() * i * (1.0 - gg * gg)).matrix();
          step_grad.rightCols(ix(H)) = (dh_new.array() * tc * o * (1.0 - o)).matrix();
          dU.noalias() += states[t].transpose() * step_grad;
          dc = (dct.array() * f).matrix() + keep.asDiagonal() * dc;
          dh = step_grad * Uv.transpose() + keep.asDiagonal() * dh;
          scatter_step(dxp, step_grad, s, 4, t);
        }
        if (auto* du = g.grad_mut(ui)) view(*du, H, 4 * H) += dU;
        accumulate_input_grads(g, xi, wi, bi, dxp, s, 4);
      },
      "lstm");
}

Tensor softmax_sparse_ce(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_sparse_ce");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) throw ShapeError("softmax_sparse_ce: one label per row required");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error("softmax_sparse_ce: label " + std::to_string(l) + " out of range");
    }
  }
  if (batch == 0) throw ShapeError("softmax_sparse_ce: empty batch");
  Graph& g = logits.graph();
  NdArray probs = softmax(logits.value());
  double loss = 0.0;
  const auto& L = logits.value().data;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = L.data() + n * classes;
    const double m = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(row[k] - m);
    loss += (m + std::log(z)) - row[labels[n]];
  }
  loss /= static_cast<double>(batch);
  NdArray y({1}, {loss});
  const std::size_t li = logits.id();
  std::vector<int> lab(labels.begin(), labels.end());
  return g.record(std::move(y), g.requires_grad(li),
                  [=, probs = std::move(probs), lab = std::move(lab)](Graph& g, std::size_t self) {
                    auto* dl = g.grad_mut(li);
                    const double scale = g.grad(self).data[0] / static_cast<double>(batch);
                    for (std::size_t n = 0; n < batch; ++n) {
                      for (std::size_t k = 0; k < classes; ++k) {
                        const double onehot = static_cast<int>(k) == lab[n] ? 1.0 : 0.0;
                        dl->data[n * classes + k] += scale * (probs.data[n * classes + k] - onehot);
                      }
                    }
                  },
                  "softmax_sparse_ce");
}

Tensor sum(const Tensor& x) {
  Graph& g = x.graph();
  double total = 0.0;
  for (double v : x.value().data) total += v;
  const std::size_t xi = x.id();
  return g.record(NdArray({1}, {total}), g.requires_grad(xi),
                  [xi](Graph& g, std::size_t self) {
                    auto* dx = g.grad_mut(xi);
                    const double d = g.grad(self).data[0];
                    for (auto& v : dx->data) v += d;
                  },
                  "sum");
}

NdArray softmax(const NdArray& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [rows, classes]");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  NdArray p(logits.shape);
  for (std::size_t n = 0; n < rows; ++n) {
    const double* in = logits.data.data() + n * classes;
    double* out = p.data.data() + n * classes;
    const double m = *std::max_element(in, in + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += (out[k] = std::exp(in[k] - m));
    for (std::size_t k = 0; k < classes; ++k) out[k] /= z;
  }
  return p;
}

}  // namespace infodemic::nn
