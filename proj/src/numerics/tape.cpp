#include "wmlff/numerics/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <utility>

#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                         b.shape_string());
  }
}

void require_column(const char* op, const Matrix& p, std::size_t n) {
  if (p.cols() != 1 || p.rows() != n) {
    throw DimensionError(std::string(op) + ": expected " + shape_string(n, 1) + ", got " +
                         p.shape_string());
  }
}

}  // namespace

std::size_t ParameterSet::add(std::string name, Matrix init) {
  if (find(name)) throw UsageError("duplicate parameter name '" + name + "'");
  params_.push_back({std::move(name), std::move(init)});
  return params_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tape::Tape(bool recording) : id_(next_tape_id++), recording_(recording) {}

std::size_t Tape::check(Var v) const {
  if (v.tape_id_ != id_ || v.index_ >= nodes_.size()) {
    throw UsageError("variable does not belong to this tape");
  }
  return v.index_;
}

Var Tape::push(Matrix value, Backprop backprop) {
  Node node;
  node.owned = std::move(value);
  if (recording_) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(id_, nodes_.size() - 1);
}

Matrix& Tape::adjoint_of(Adjoints& adj, std::size_t index) const {
  Matrix& a = adj[index];
  if (a.empty() && !nodes_[index].value().empty()) {
    const Matrix& v = nodes_[index].value();
    a = Matrix(v.rows(), v.cols());
  }
  return a;
}

const Matrix& Tape::value(Var v) const { return nodes_[check(v)].value(); }

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(const ParameterSet& params, std::size_t index) {
  if (index >= params.size()) throw UsageError("parameter index out of range");
  Node node;
  node.external = &params[index].value;
  node.param_index = index;
  nodes_.push_back(std::move(node));
  return Var(id_, nodes_.size() - 1);
}

Var Tape::affine(Var x, Var w, Var b) {
  const std::size_t xi = check(x), wi = check(w), bi = check(b);
  const Matrix& X = nodes_[xi].value();
  const Matrix& W = nodes_[wi].value();
  const Matrix& B = nodes_[bi].value();
  if (X.cols() != W.cols() || B.rows() != 1 || B.cols() != W.rows()) {
    throw DimensionError("affine: x " + X.shape_string() + ", W " + W.shape_string() + ", b " +
                         B.shape_string());
  }
  const std::size_t batch = X.rows(), n = X.cols(), m = W.rows();
  Matrix Y(batch, m);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto xr = X.row(r);
    auto yr = Y.row(r);
    for (std::size_t i = 0; i < m; ++i) {
      const auto wr = W.row(i);
      double acc = B[i];
      for (std::size_t j = 0; j < n; ++j) acc += wr[j] * xr[j];
      yr[i] = acc;
    }
  }
  return push(std::move(Y), [xi, wi, bi](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& X = t.nodes_[xi].value();
    const Matrix& W = t.nodes_[wi].value();
    Matrix& dX = t.adjoint_of(adj, xi);
    Matrix& dW = t.adjoint_of(adj, wi);
    Matrix& dB = t.adjoint_of(adj, bi);
    const std::size_t batch = X.rows(), n = X.cols(), m = W.rows();
    for (std::size_t r = 0; r < batch; ++r) {
      const auto gr = g.row(r);
      const auto xr = X.row(r);
      auto dxr = dX.row(r);
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = gr[i];
        if (gi == 0.0) continue;
        dB[i] += gi;
        const auto wr = W.row(i);
        auto dwr = dW.row(i);
        for (std::size_t j = 0; j < n; ++j) {
          dwr[j] += gi * xr[j];
          dxr[j] += gi * wr[j];
        }
      }
    }
  });
}

Var Tape::linear(Var x, Var w) {
  const std::size_t xi = check(x), wi = check(w);
  const Matrix& X = nodes_[xi].value();
  const Matrix& W = nodes_[wi].value();
  if (X.cols() != W.cols()) {
    throw DimensionError("linear: x " + X.shape_string() + ", W " + W.shape_string());
  }
  const std::size_t batch = X.rows(), n = X.cols(), m = W.rows();
  Matrix Y(batch, m);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += W(i, j) * X(r, j);
      Y(r, i) = acc;
    }
  }
  return push(std::move(Y), [xi, wi](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& X = t.nodes_[xi].value();
    const Matrix& W = t.nodes_[wi].value();
    Matrix& dX = t.adjoint_of(adj, xi);
    Matrix& dW = t.adjoint_of(adj, wi);
    for (std::size_t r = 0; r < X.rows(); ++r) {
      for (std::size_t i = 0; i < W.rows(); ++i) {
        const double gi = g(r, i);
        for (std::size_t j = 0; j < X.cols(); ++j) {
          dW(i, j) += gi * X(r, j);
          dX(r, j) += gi * W(i, j);
        }
      }
    }
  });
}

Var Tape::leaky_relu(Var x, double slope) {
  const std::size_t xi = check(x);
  const Matrix& X = nodes_[xi].value();
  Matrix Y(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) Y[k] = X[k] > 0.0 ? X[k] : slope * X[k];
  return push(std::move(Y), [xi, slope](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& X = t.nodes_[xi].value();
    Matrix& dX = t.adjoint_of(adj, xi);
    for (std::size_t k = 0; k < X.size(); ++k) dX[k] += X[k] > 0.0 ? g[k] : slope * g[k];
  });
}

Var Tape::mul_const(Var x, Matrix multiplier) {
  const std::size_t xi = check(x);
  const Matrix& X = nodes_[xi].value();
  require_same_shape("mul_const", X, multiplier);
  Matrix Y(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) Y[k] = X[k] * multiplier[k];
  return push(std::move(Y), [xi, mult = std::move(multiplier)](const Tape& t, const Matrix& g,
                                                                 Adjoints& adj) {
    Matrix& dX = t.adjoint_of(adj, xi);
    for (std::size_t k = 0; k < dX.size(); ++k) dX[k] += g[k] * mult[k];
  });
}

Var Tape::mul(Var a, Var b) {
  const std::size_t ai = check(a), bi = check(b);
  const Matrix& A = nodes_[ai].value();
  const Matrix& B = nodes_[bi].value();
  require_same_shape("mul", A, B);
  Matrix Y(A.rows(), A.cols());
  for (std::size_t k = 0; k < A.size(); ++k) Y[k] = A[k] * B[k];
  return push(std::move(Y), [ai, bi](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& A = t.nodes_[ai].value();
    const Matrix& B = t.nodes_[bi].value();
    {
      Matrix& dA = t.adjoint_of(adj, ai);
      for (std::size_t k = 0; k < A.size(); ++k) dA[k] += g[k] * B[k];
    }
    Matrix& dB = t.adjoint_of(adj, bi);
    for (std::size_t k = 0; k < B.size(); ++k) dB[k] += g[k] * A[k];
  });
}

Var Tape::add(Var a, Var b) {
  const std::size_t ai = check(a), bi = check(b);
  const Matrix& A = nodes_[ai].value();
  const Matrix& B = nodes_[bi].value();
  require_same_shape("add", A, B);
  Matrix Y(A.rows(), A.cols());
  for (std::size_t k = 0; k < A.size(); ++k) Y[k] = A[k] + B[k];
  return push(std::move(Y), [ai, bi](const Tape& t, const Matrix& g, Adjoints& adj) {
    {
      Matrix& dA = t.adjoint_of(adj, ai);
      for (std::size_t k = 0; k < g.size(); ++k) dA[k] += g[k];
    }
    Matrix& dB = t.adjoint_of(adj, bi);
    for (std::size_t k = 0; k < g.size(); ++k) dB[k] += g[k];
  });
}

Var Tape::scale_const(Var x, double c) {
  const std::size_t xi = check(x);
  const Matrix& X = nodes_[xi].value();
  Matrix Y(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) Y[k] = X[k] * c;
  return push(std::move(Y), [xi, c](const Tape& t, const Matrix& g, Adjoints& adj) {
    Matrix& dX = t.adjoint_of(adj, xi);
    for (std::size_t k = 0; k < g.size(); ++k) dX[k] += g[k] * c;
  });
}

Var Tape::scale(Var x, Var s) {
  const std::size_t xi = check(x), si = check(s);
  const Matrix& X = nodes_[xi].value();
  const Matrix& S = nodes_[si].value();
  if (S.rows() != 1 || S.cols() != 1) {
    throw DimensionError("scale: expected [1x1] scalar, got " + S.shape_string());
  }
  const double sv = S[0];
  Matrix Y(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) Y[k] = X[k] * sv;
  return push(std::move(Y), [xi, si](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& X = t.nodes_[xi].value();
    const double sv = t.nodes_[si].value()[0];
    double ds = 0.0;
    Matrix& dX = t.adjoint_of(adj, xi);
    for (std::size_t k = 0; k < X.size(); ++k) {
      dX[k] += g[k] * sv;
      ds += g[k] * X[k];
    }
    t.adjoint_of(adj, si)[0] += ds;
  });
}

Var Tape::embed_mean(Var table, std::span<const std::int32_t> ids, std::size_t ids_per_row) {
  const std::size_t ti = check(table);
  const Matrix& T = nodes_[ti].value();
  if (ids_per_row == 0) {
    if (!ids.empty()) throw DimensionError("embed_mean: ids given with zero columns");
    throw UsageError("embed_mean: batch size is undefined with zero id columns");
  }
  if (ids.size() % ids_per_row != 0) {
    throw DimensionError("embed_mean: " + std::to_string(ids.size()) + " ids not divisible by " +
                         std::to_string(ids_per_row));
  }
  const std::size_t batch = ids.size() / ids_per_row, dim = T.cols();
  for (const auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= T.rows()) {
      throw DimensionError("embed_mean: id " + std::to_string(id) + " outside table of " +
                           std::to_string(T.rows()) + " rows");
    }
  }
  const double inv = 1.0 / static_cast<double>(ids_per_row);
  Matrix Y(batch, dim);
  for (std::size_t r = 0; r < batch; ++r) {
    auto yr = Y.row(r);
    for (std::size_t k = 0; k < ids_per_row; ++k) {
      const auto er = T.row(static_cast<std::size_t>(ids[r * ids_per_row + k]));
      for (std::size_t d = 0; d < dim; ++d) yr[d] += er[d];
    }
    for (auto& v : yr) v *= inv;
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return push(std::move(Y), [ti, ids_per_row, inv, saved = std::move(saved)](
                                const Tape& t, const Matrix& g, Adjoints& adj) {
    Matrix& dT = t.adjoint_of(adj, ti);
    const std::size_t dim = dT.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const auto gr = g.row(r);
      for (std::size_t k = 0; k < ids_per_row; ++k) {
        auto dr = dT.row(static_cast<std::size_t>(saved[r * ids_per_row + k]));
        for (std::size_t d = 0; d < dim; ++d) dr[d] += gr[d] * inv;
      }
    }
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  std::vector<std::size_t> idx;
  idx.reserve(parts.size());
  std::size_t rows = 0, cols = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    idx.push_back(check(parts[p]));
    const Matrix& m = nodes_[idx.back()].value();
    if (p == 0) rows = m.rows();
    if (m.rows() != rows) {
      throw DimensionError("concat_cols: row counts " + std::to_string(rows) + " and " +
                           std::to_string(m.rows()));
    }
    cols += m.cols();
  }
  Matrix Y(rows, cols);
  std::size_t offset = 0;
  for (const auto i : idx) {
    const Matrix& m = nodes_[i].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(m.row(r).begin(), m.row(r).end(), Y.row(r).begin() + offset);
    }
    offset += m.cols();
  }
  return push(std::move(Y), [idx = std::move(idx)](const Tape& t, const Matrix& g, Adjoints& adj) {
    std::size_t offset = 0;
    for (const auto i : idx) {
      const std::size_t c = t.nodes_[i].value().cols();
      if (c > 0) {
        Matrix& d = t.adjoint_of(adj, i);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t k = 0; k < c; ++k) d(r, k) += g(r, offset + k);
        }
      }
      offset += c;
    }
  });
}

Var Tape::row_dot(Var a, Var b) {
  const std::size_t ai = check(a), bi = check(b);
  const Matrix& A = nodes_[ai].value();
  const Matrix& B = nodes_[bi].value();
  require_same_shape("row_dot", A, B);
  Matrix Y(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) Y[r] = wmlff::dot(A.row(r), B.row(r));
  return push(std::move(Y), [ai, bi](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& A = t.nodes_[ai].value();
    const Matrix& B = t.nodes_[bi].value();
    Matrix& dA = t.adjoint_of(adj, ai);
    Matrix& dB = t.adjoint_of(adj, bi);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (std::size_t k = 0; k < A.cols(); ++k) {
        dA(r, k) += g[r] * B(r, k);
        dB(r, k) += g[r] * A(r, k);
      }
    }
  });
}

Var Tape::row_cosine(Var a, Var b) {
  const std::size_t ai = check(a), bi = check(b);
  const Matrix& A = nodes_[ai].value();
  const Matrix& B = nodes_[bi].value();
  require_same_shape("row_cosine", A, B);
  Matrix Y(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) Y[r] = wmlff::cosine(A.row(r), B.row(r));
  return push(std::move(Y), [ai, bi](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& A = t.nodes_[ai].value();
    const Matrix& B = t.nodes_[bi].value();
    Matrix& dA = t.adjoint_of(adj, ai);
    Matrix& dB = t.adjoint_of(adj, bi);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const auto ar = A.row(r), br = B.row(r);
      const double na = std::sqrt(wmlff::dot(ar, ar));
      const double nb = std::sqrt(wmlff::dot(br, br));
      if (na == 0.0 || nb == 0.0) continue;
      const double c = wmlff::dot(ar, br) / (na * nb);
      const double inv = 1.0 / (na * nb);
      for (std::size_t k = 0; k < ar.size(); ++k) {
        dA(r, k) += g[r] * (br[k] * inv - c * ar[k] / (na * na));
        dB(r, k) += g[r] * (ar[k] * inv - c * br[k] / (nb * nb));
      }
    }
  });
}

Var Tape::sigmoid(Var x) {
  const std::size_t xi = check(x);
  const Matrix& X = nodes_[xi].value();
  Matrix Y(X.rows(), X.cols());
  for (std::size_t k = 0; k < X.size(); ++k) Y[k] = wmlff::sigmoid(X[k]);
  const std::size_t yi = nodes_.size();
  return push(std::move(Y), [xi, yi](const Tape& t, const Matrix& g, Adjoints& adj) {
    const Matrix& Y = t.nodes_[yi].value();
    Matrix& dX = t.adjoint_of(adj, xi);
    for (std::size_t k = 0; k < Y.size(); ++k) dX[k] += g[k] * Y[k] * (1.0 - Y[k]);
  });
}

Var Tape::sum(Var x) {
  const std::size_t xi = check(x);
  const Matrix& X = nodes_[xi].value();
  double acc = 0.0;
  for (const double v : X.values()) acc += v;
  return push(Matrix(1, 1, acc), [xi](const Tape& t, const Matrix& g, Adjoints& adj) {
    Matrix& dX = t.adjoint_of(adj, xi);
    for (std::size_t k = 0; k < dX.size(); ++k) dX[k] += g[0];
  });
}

Var Tape::bce_mean(Var p, std::span<const double> labels, double eps) {
  const std::size_t pi = check(p);
  const Matrix& P = nodes_[pi].value();
  require_column("bce_mean", P, labels.size());
  if (labels.empty()) throw DimensionError("bce_mean: empty batch");
  double acc = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double q = std::clamp(P[r], eps, 1.0 - eps);
    acc += labels[r] * std::log(q) + (1.0 - labels[r]) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(labels.size());
  std::vector<double> y(labels.begin(), labels.end());
  return push(Matrix(1, 1, -acc / n), [pi, eps, y = std::move(y)](const Tape& t, const Matrix& g,
                                                                   Adjoints& adj) {
    const Matrix& P = t.nodes_[pi].value();
    Matrix& dP = t.adjoint_of(adj, pi);
    const double n = static_cast<double>(y.size());
    for (std::size_t r = 0; r < y.size(); ++r) {
      const double q = P[r];
      if (q < eps || q > 1.0 - eps) continue;
      dP[r] += g[0] * -(y[r] / q - (1.0 - y[r]) / (1.0 - q)) / n;
    }
  });
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Var Tape::bce_logits_mean(Var z, std::span<const double> labels, double eps) {
  const std::size_t zi = check(z);
  const Matrix& Z = nodes_[zi].value();
  require_column("bce_logits_mean", Z, labels.size());
  if (labels.empty()) throw DimensionError("bce_logits_mean: empty batch");
  const double zmax = std::log((1.0 - eps) / eps);
  double acc = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double q = std::clamp(Z[r], -zmax, zmax);
    acc += labels[r] * softplus(-q) + (1.0 - labels[r]) * softplus(q);
  }
  const double n = static_cast<double>(labels.size());
  std::vector<double> y(labels.begin(), labels.end());
  return push(Matrix(1, 1, acc / n), [zi, zmax, y = std::move(y)](const Tape& t, const Matrix& g,
                                                                  Adjoints& adj) {
    const Matrix& Z = t.nodes_[zi].value();
    Matrix& dZ = t.adjoint_of(adj, zi);
    const double n = static_cast<double>(y.size());
    for (std::size_t r = 0; r < y.size(); ++r) {
      if (Z[r] < -zmax || Z[r] > zmax) continue;
      // p - y written as (1 - y) p - y (1 - p) with both tails from exp(-|z|).
      const double e = std::exp(-std::abs(Z[r]));
      const double p = Z[r] >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      const double q = Z[r] >= 0 ? e / (1.0 + e) : 1.0 / (1.0 + e);
      dZ[r] += g[0] * ((1.0 - y[r]) * p - y[r] * q) / n;
    }
  });
}

Var Tape::mse_mean(Var p, std::span<const double> targets) {
  const std::size_t pi = check(p);
  const Matrix& P = nodes_[pi].value();
  require_column("mse_mean", P, targets.size());
  if (targets.empty()) throw DimensionError("mse_mean: empty batch");
  double acc = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const double d = P[r] - targets[r];
    acc += d * d;
  }
  std::vector<double> y(targets.begin(), targets.end());
  return push(Matrix(1, 1, acc / static_cast<double>(targets.size())),
              [pi, y = std::move(y)](const Tape& t, const Matrix& g, Adjoints& adj) {
                const Matrix& P = t.nodes_[pi].value();
                Matrix& dP = t.adjoint_of(adj, pi);
                const double n = static_cast<double>(y.size());
                for (std::size_t r = 0; r < y.size(); ++r) {
                  dP[r] += g[0] * 2.0 * (P[r] - y[r]) / n;
                }
              });
}

Gradients Tape::backward(Var output, const ParameterSet& params) const {
  if (!recording_) throw UsageError("backward on a tape with recording disabled");
  const std::size_t out = check(output);
  const Matrix& v = nodes_[out].value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw UsageError("backward needs a scalar output, got " + v.shape_string());
  }
  Adjoints adj(nodes_.size());
  adj[out] = Matrix(1, 1, 1.0);
  Gradients grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.emplace_back(p.value.rows(), p.value.cols());
  for (std::size_t i = out + 1; i-- > 0;) {
    if (adj[i].empty()) continue;
    const Node& node = nodes_[i];
    if (node.param_index) {
      const std::size_t pi = *node.param_index;
      if (pi >= grads.size() || !grads[pi].same_shape(adj[i])) {
        throw UsageError("backward: parameter set does not match the tape");
      }
      for (std::size_t k = 0; k < adj[i].size(); ++k) grads[pi][k] += adj[i][k];
    } else if (node.backprop) {
      node.backprop(*this, adj[i], adj);
    }
    adj[i] = Matrix();
  }
  return grads;
}

}  // namespace wmlff
