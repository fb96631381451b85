#include "voc/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "voc/error.hpp"

namespace voc::nn {

namespace {
constexpr double kLnEps = 1e-5;
}

std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw InvalidInputError("non-positive dim in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Parameter::Parameter(std::string name_, std::vector<int> shape_)
    : name(std::move(name_)), shape(std::move(shape_)) {
  data.assign(numel_of(shape), 0.0);
  grad.assign(data.size(), 0.0);
}

void Parameter::init_normal(Rng& rng, double std_dev) {
  for (double& v : data) v = rng.normal() * std_dev;
}

Graph::Node& Graph::node(TensorId id) { return nodes_.at(static_cast<std::size_t>(id)); }
const Graph::Node& Graph::node(TensorId id) const {
  return nodes_.at(static_cast<std::size_t>(id));
}

TensorId Graph::push(Node n) {
  n.grad.assign(n.data.size(), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<TensorId>(nodes_.size() - 1);
}

TensorId Graph::input(std::vector<int> shape, std::vector<double> data) {
  if (data.size() != numel_of(shape)) {
    throw InvalidInputError("input data length does not match shape " + shape_str(shape));
  }
  Node n;
  n.shape = std::move(shape);
  n.data = std::move(data);
  return push(std::move(n));
}

TensorId Graph::param(Parameter& p) {
  Node n;
  n.shape = p.shape;
  n.data = p.data;
  n.bound = &p;
  return push(std::move(n));
}

const std::vector<int>& Graph::shape(TensorId id) const { return node(id).shape; }
std::span<const double> Graph::data(TensorId id) const { return node(id).data; }
std::span<const double> Graph::grad(TensorId id) const { return node(id).grad; }

double Graph::scalar(TensorId id) const {
  const Node& n = node(id);
  if (n.data.size() != 1) throw InvalidInputError("scalar() on tensor " + shape_str(n.shape));
  return n.data[0];
}

TensorId Graph::matmul(TensorId a, TensorId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (nb.shape.size() != 2 || (na.shape.size() != 2 && na.shape.size() != 3)) {
    throw InvalidInputError("matmul wants [m,k]or[B,m,k] x [k,n], got " + shape_str(na.shape) +
                            " x " + shape_str(nb.shape));
  }
  int batch = na.shape.size() == 3 ? na.shape[0] : 1;
  int m = na.shape[na.shape.size() - 2];
  int k = na.shape.back();
  if (nb.shape[0] != k) {
    throw InvalidInputError("matmul inner dims disagree: " + shape_str(na.shape) + " x " +
                            shape_str(nb.shape));
  }
  int n = nb.shape[1];
  Node out;
  out.shape = na.shape.size() == 3 ? std::vector<int>{batch, m, n} : std::vector<int>{m, n};
  out.data.assign(static_cast<std::size_t>(batch) * m * n, 0.0);
  for (int bi = 0; bi < batch; ++bi) {
    const double* A = na.data.data() + static_cast<std::size_t>(bi) * m * k;
    double* Y = out.data.data() + static_cast<std::size_t>(bi) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int l = 0; l < k; ++l) {
        double av = A[static_cast<std::size_t>(i) * k + l];
        if (av == 0.0) continue;
        const double* Brow = nb.data.data() + static_cast<std::size_t>(l) * n;
        double* Yrow = Y + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) Yrow[j] += av * Brow[j];
      }
    }
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, a, b, id, batch, m, k, n]() {
      Node& na2 = node(a);
      Node& nb2 = node(b);
      Node& ny = node(id);
      for (int bi = 0; bi < batch; ++bi) {
        const double* A = na2.data.data() + static_cast<std::size_t>(bi) * m * k;
        const double* dY = ny.grad.data() + static_cast<std::size_t>(bi) * m * n;
        double* dA = na2.grad.data() + static_cast<std::size_t>(bi) * m * k;
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            double dy = dY[static_cast<std::size_t>(i) * n + j];
            if (dy == 0.0) continue;
            const double* Brow = nb2.data.data();
            for (int l = 0; l < k; ++l) {
              dA[static_cast<std::size_t>(i) * k + l] += dy * Brow[static_cast<std::size_t>(l) * n + j];
              nb2.grad[static_cast<std::size_t>(l) * n + j] += dy * A[static_cast<std::size_t>(i) * k + l];
            }
          }
        }
      }
    };
  }
  return id;
}

TensorId Graph::add(TensorId a, TensorId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (nb.shape.size() > na.shape.size()) {
    throw InvalidInputError("add: " + shape_str(nb.shape) + " is not a suffix of " +
                            shape_str(na.shape));
  }
  std::size_t offset = na.shape.size() - nb.shape.size();
  for (std::size_t i = 0; i < nb.shape.size(); ++i) {
    if (na.shape[offset + i] != nb.shape[i]) {
      throw InvalidInputError("add: " + shape_str(nb.shape) + " is not a suffix of " +
                              shape_str(na.shape));
    }
  }
  std::size_t bn = nb.data.size();
  Node out;
  out.shape = na.shape;
  out.data.resize(na.data.size());
  for (std::size_t i = 0; i < na.data.size(); ++i) out.data[i] = na.data[i] + nb.data[i % bn];
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, a, b, id, bn]() {
      Node& na2 = node(a);
      Node& nb2 = node(b);
      Node& ny = node(id);
      for (std::size_t i = 0; i < ny.grad.size(); ++i) {
        na2.grad[i] += ny.grad[i];
        nb2.grad[i % bn] += ny.grad[i];
      }
    };
  }
  return id;
}

TensorId Graph::embedding(TensorId table, std::span<const int> ids, std::vector<int> ids_shape) {
  const Node& nt = node(table);
  if (nt.shape.size() != 2) {
    throw InvalidInputError("embedding table must be [V,C], got " + shape_str(nt.shape));
  }
  int V = nt.shape[0];
  int C = nt.shape[1];
  if (ids.size() != numel_of(ids_shape)) {
    throw InvalidInputError("embedding ids length does not match ids shape " +
                            shape_str(ids_shape));
  }
  for (int v : ids) {
    if (v < 0 || v >= V) throw InvalidInputError("embedding id out of vocab range");
  }
  Node out;
  out.shape = ids_shape;
  out.shape.push_back(C);
  out.data.resize(ids.size() * static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(nt.data.begin() + static_cast<std::size_t>(ids[i]) * C, C,
                out.data.begin() + i * C);
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    std::vector<int> ids_copy(ids.begin(), ids.end());
    node(id).backward_fn = [this, table, id, ids_copy, C]() {
      Node& nt2 = node(table);
      Node& ny = node(id);
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        double* drow = nt2.grad.data() + static_cast<std::size_t>(ids_copy[i]) * C;
        const double* dy = ny.grad.data() + i * C;
        for (int c = 0; c < C; ++c) drow[c] += dy[c];
      }
    };
  }
  return id;
}

TensorId Graph::layer_norm(TensorId x, TensorId gain, TensorId bias) {
  const Node& nx = node(x);
  const Node& ng = node(gain);
  const Node& nb = node(bias);
  if (nx.shape.empty()) throw InvalidInputError("layer_norm on scalar");
  int D = nx.shape.back();
  if (ng.shape != std::vector<int>{D} || nb.shape != std::vector<int>{D}) {
    throw InvalidInputError("layer_norm gain/bias must be [" + std::to_string(D) + "]");
  }
  std::size_t rows = nx.data.size() / D;
  Node out;
  out.shape = nx.shape;
  out.data.resize(nx.data.size());
  std::vector<double> xhat(nx.data.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nx.data.data() + r * D;
    double mean = 0.0;
    for (int j = 0; j < D; ++j) mean += xr[j];
    mean /= D;
    double var = 0.0;
    for (int j = 0; j < D; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= D;
    double inv = 1.0 / std::sqrt(var + kLnEps);
    inv_std[r] = inv;
    for (int j = 0; j < D; ++j) {
      double xh = (xr[j] - mean) * inv;
      xhat[r * D + j] = xh;
      out.data[r * D + j] = xh * ng.data[j] + nb.data[j];
    }
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, x, gain, bias, id, D, rows, xhat = std::move(xhat),
                            inv_std = std::move(inv_std)]() {
      Node& nx2 = node(x);
      Node& ng2 = node(gain);
      Node& nb2 = node(bias);
      Node& ny = node(id);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dy = ny.grad.data() + r * D;
        const double* xh = xhat.data() + r * D;
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < D; ++j) {
          double dxh = dy[j] * ng2.data[j];
          s1 += dxh;
          s2 += dxh * xh[j];
          ng2.grad[j] += dy[j] * xh[j];
          nb2.grad[j] += dy[j];
        }
        double* dx = nx2.grad.data() + r * D;
        for (int j = 0; j < D; ++j) {
          double dxh = dy[j] * ng2.data[j];
          dx[j] += inv_std[r] * (dxh - s1 / D - xh[j] * s2 / D);
        }
      }
    };
  }
  return id;
}

TensorId Graph::softmax(TensorId x) {
  const Node& nx = node(x);
  if (nx.shape.empty()) throw InvalidInputError("softmax on scalar");
  int D = nx.shape.back();
  std::size_t rows = nx.data.size() / D;
  Node out;
  out.shape = nx.shape;
  out.data.resize(nx.data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nx.data.data() + r * D;
    double* yr = out.data.data() + r * D;
    double mx = xr[0];
    for (int j = 1; j < D; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < D; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < D; ++j) yr[j] /= sum;
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, x, id, D, rows]() {
      Node& nx2 = node(x);
      Node& ny = node(id);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = ny.data.data() + r * D;
        const double* dy = ny.grad.data() + r * D;
        double dot = 0.0;
        for (int j = 0; j < D; ++j) dot += y[j] * dy[j];
        double* dx = nx2.grad.data() + r * D;
        for (int j = 0; j < D; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return id;
}

TensorId Graph::causal_self_attention(TensorId qkv, int n_heads) {
  const Node& nq = node(qkv);
  if (nq.shape.size() != 3 || nq.shape[2] % 3 != 0) {
    throw InvalidInputError("attention wants qkv [B,T,3C], got " + shape_str(nq.shape));
  }
  int B = nq.shape[0];
  int T = nq.shape[1];
  int C = nq.shape[2] / 3;
  if (n_heads <= 0 || C % n_heads != 0) {
    throw InvalidInputError("attention: channels " + std::to_string(C) +
                            " not divisible by heads " + std::to_string(n_heads));
  }
  int hd = C / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::size_t row3 = static_cast<std::size_t>(3) * C;

  Node out;
  out.shape = {B, T, C};
  out.data.assign(static_cast<std::size_t>(B) * T * C, 0.0);
  // att[b,h,t,u] kept for the backward pass
  std::vector<double> att(static_cast<std::size_t>(B) * n_heads * T * T, 0.0);
  auto qat = [&](const std::vector<double>& buf, int b, int t, int h, int d) -> double {
    return buf[(static_cast<std::size_t>(b) * T + t) * row3 + static_cast<std::size_t>(h) * hd + d];
  };
  auto kat = [&](const std::vector<double>& buf, int b, int t, int h, int d) -> double {
    return buf[(static_cast<std::size_t>(b) * T + t) * row3 + C + static_cast<std::size_t>(h) * hd + d];
  };
  auto vat = [&](const std::vector<double>& buf, int b, int t, int h, int d) -> double {
    return buf[(static_cast<std::size_t>(b) * T + t) * row3 + 2 * C + static_cast<std::size_t>(h) * hd + d];
  };
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      double* arow = att.data() + ((static_cast<std::size_t>(b) * n_heads + h) * T) * T;
      for (int t = 0; t < T; ++t) {
        double mx = -1e300;
        std::vector<double> scores(t + 1);
        for (int u = 0; u <= t; ++u) {
          double s = 0.0;
          for (int d = 0; d < hd; ++d) s += qat(nq.data, b, t, h, d) * kat(nq.data, b, u, h, d);
          scores[u] = s * scale;
          mx = std::max(mx, scores[u]);
        }
        double sum = 0.0;
        for (int u = 0; u <= t; ++u) {
          scores[u] = std::exp(scores[u] - mx);
          sum += scores[u];
        }
        for (int u = 0; u <= t; ++u) arow[static_cast<std::size_t>(t) * T + u] = scores[u] / sum;
        double* yrow = out.data.data() + (static_cast<std::size_t>(b) * T + t) * C +
                       static_cast<std::size_t>(h) * hd;
        for (int u = 0; u <= t; ++u) {
          double a = arow[static_cast<std::size_t>(t) * T + u];
          for (int d = 0; d < hd; ++d) yrow[d] += a * vat(nq.data, b, u, h, d);
        }
      }
    }
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, qkv, id, B, T, C, n_heads, hd, scale, row3,
                            att = std::move(att)]() {
      Node& nq2 = node(qkv);
      Node& ny = node(id);
      auto qix = [&](int b, int t, int h, int d) {
        return (static_cast<std::size_t>(b) * T + t) * row3 + static_cast<std::size_t>(h) * hd + d;
      };
      auto kix = [&](int b, int t, int h, int d) {
        return (static_cast<std::size_t>(b) * T + t) * row3 + C + static_cast<std::size_t>(h) * hd + d;
      };
      auto vix = [&](int b, int t, int h, int d) {
        return (static_cast<std::size_t>(b) * T + t) * row3 + 2 * C +
               static_cast<std::size_t>(h) * hd + d;
      };
      std::vector<double> datt(static_cast<std::size_t>(T) * T);
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < n_heads; ++h) {
          const double* arow = att.data() + ((static_cast<std::size_t>(b) * n_heads + h) * T) * T;
          std::fill(datt.begin(), datt.end(), 0.0);
          for (int t = 0; t < T; ++t) {
            const double* dy = ny.grad.data() + (static_cast<std::size_t>(b) * T + t) * C +
                               static_cast<std::size_t>(h) * hd;
            for (int u = 0; u <= t; ++u) {
              double a = arow[static_cast<std::size_t>(t) * T + u];
              double acc = 0.0;
              for (int d = 0; d < hd; ++d) {
                nq2.grad[vix(b, u, h, d)] += a * dy[d];
                acc += dy[d] * nq2.data[vix(b, u, h, d)];
              }
              datt[static_cast<std::size_t>(t) * T + u] = acc;
            }
          }
          for (int t = 0; t < T; ++t) {
            double dot = 0.0;
            for (int u = 0; u <= t; ++u) {
              dot += arow[static_cast<std::size_t>(t) * T + u] *
                     datt[static_cast<std::size_t>(t) * T + u];
            }
            for (int u = 0; u <= t; ++u) {
              double ds = arow[static_cast<std::size_t>(t) * T + u] *
                          (datt[static_cast<std::size_t>(t) * T + u] - dot) * scale;
              if (ds == 0.0) continue;
              for (int d = 0; d < hd; ++d) {
                nq2.grad[qix(b, t, h, d)] += ds * nq2.data[kix(b, u, h, d)];
                nq2.grad[kix(b, u, h, d)] += ds * nq2.data[qix(b, t, h, d)];
              }
            }
          }
        }
      }
    };
  }
  return id;
}

TensorId Graph::relu(TensorId x) {
  const Node& nx = node(x);
  Node out;
  out.shape = nx.shape;
  out.data.resize(nx.data.size());
  for (std::size_t i = 0; i < nx.data.size(); ++i) out.data[i] = nx.data[i] > 0.0 ? nx.data[i] : 0.0;
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, x, id]() {
      Node& nx2 = node(x);
      Node& ny = node(id);
      for (std::size_t i = 0; i < ny.grad.size(); ++i) {
        if (nx2.data[i] > 0.0) nx2.grad[i] += ny.grad[i];
      }
    };
  }
  return id;
}

TensorId Graph::gelu(TensorId x) {
  const Node& nx = node(x);
  Node out;
  out.shape = nx.shape;
  out.data.resize(nx.data.size());
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  for (std::size_t i = 0; i < nx.data.size(); ++i) {
    double v = nx.data[i];
    out.data[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, x, id]() {
      Node& nx2 = node(x);
      Node& ny = node(id);
      constexpr double kInvSqrt2Pi = 0.3989422804014326779;
      for (std::size_t i = 0; i < ny.grad.size(); ++i) {
        double v = nx2.data[i];
        double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        nx2.grad[i] += ny.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return id;
}

TensorId Graph::tanh_act(TensorId x) {
  const Node& nx = node(x);
  Node out;
  out.shape = nx.shape;
  out.data.resize(nx.data.size());
  for (std::size_t i = 0; i < nx.data.size(); ++i) out.data[i] = std::tanh(nx.data[i]);
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, x, id]() {
      Node& nx2 = node(x);
      Node& ny = node(id);
      for (std::size_t i = 0; i < ny.grad.size(); ++i) {
        nx2.grad[i] += ny.grad[i] * (1.0 - ny.data[i] * ny.data[i]);
      }
    };
  }
  return id;
}

TensorId Graph::concat(TensorId a, TensorId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape.size() != nb.shape.size() || na.shape.empty()) {
    throw InvalidInputError("concat rank mismatch: " + shape_str(na.shape) + " vs " +
                            shape_str(nb.shape));
  }
  for (std::size_t i = 0; i + 1 < na.shape.size(); ++i) {
    if (na.shape[i] != nb.shape[i]) {
      throw InvalidInputError("concat leading dims differ: " + shape_str(na.shape) + " vs " +
                              shape_str(nb.shape));
    }
  }
  int da = na.shape.back();
  int db = nb.shape.back();
  std::size_t rows = na.data.size() / da;
  Node out;
  out.shape = na.shape;
  out.shape.back() = da + db;
  out.data.resize(rows * static_cast<std::size_t>(da + db));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(na.data.begin() + r * da, da, out.data.begin() + r * (da + db));
    std::copy_n(nb.data.begin() + r * db, db, out.data.begin() + r * (da + db) + da);
  }
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, a, b, id, da, db, rows]() {
      Node& na2 = node(a);
      Node& nb2 = node(b);
      Node& ny = node(id);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dy = ny.grad.data() + r * (da + db);
        for (int j = 0; j < da; ++j) na2.grad[r * da + j] += dy[j];
        for (int j = 0; j < db; ++j) nb2.grad[r * db + j] += dy[da + j];
      }
    };
  }
  return id;
}

TensorId Graph::cross_entropy(TensorId logits, std::span<const int> targets) {
  const Node& nl = node(logits);
  if (nl.shape.empty()) throw InvalidInputError("cross_entropy on scalar");
  int V = nl.shape.back();
  std::size_t rows = nl.data.size() / V;
  if (targets.size() != rows) {
    throw InvalidInputError("cross_entropy: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(rows) + " positions");
  }
  std::vector<double> probs(nl.data.size());
  double loss = 0.0;
  std::size_t n_active = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = nl.data.data() + r * V;
    double* pr = probs.data() + r * V;
    double mx = xr[0];
    for (int j = 1; j < V; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < V; ++j) {
      pr[j] = std::exp(xr[j] - mx);
      sum += pr[j];
    }
    for (int j = 0; j < V; ++j) pr[j] /= sum;
    int t = targets[r];
    if (t < 0) continue;
    if (t >= V) throw InvalidInputError("cross_entropy target out of vocab range");
    loss -= std::log(std::max(pr[t], 1e-300));
    ++n_active;
  }
  if (n_active == 0) throw InvalidInputError("cross_entropy: every position masked out");
  loss /= static_cast<double>(n_active);
  Node out;
  out.shape = {1};
  out.data = {loss};
  TensorId id = push(std::move(out));
  if (recording_) {
    std::vector<int> tcopy(targets.begin(), targets.end());
    node(id).backward_fn = [this, logits, id, V, rows, n_active, tcopy = std::move(tcopy),
                            probs = std::move(probs)]() {
      Node& nl2 = node(logits);
      Node& ny = node(id);
      double scale = ny.grad[0] / static_cast<double>(n_active);
      for (std::size_t r = 0; r < rows; ++r) {
        int t = tcopy[r];
        if (t < 0) continue;
        const double* pr = probs.data() + r * V;
        double* dl = nl2.grad.data() + r * V;
        for (int j = 0; j < V; ++j) dl[j] += scale * (pr[j] - (j == t ? 1.0 : 0.0));
      }
    };
  }
  return id;
}

TensorId Graph::mse(TensorId pred, std::span<const double> target) {
  const Node& np = node(pred);
  if (np.data.size() != target.size()) {
    throw InvalidInputError("mse target length " + std::to_string(target.size()) +
                            " vs prediction " + shape_str(np.shape));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double d = np.data[i] - target[i];
    loss += d * d;
  }
  loss /= static_cast<double>(target.size());
  Node out;
  out.shape = {1};
  out.data = {loss};
  TensorId id = push(std::move(out));
  if (recording_) {
    std::vector<double> tcopy(target.begin(), target.end());
    node(id).backward_fn = [this, pred, id, tcopy = std::move(tcopy)]() {
      Node& np2 = node(pred);
      Node& ny = node(id);
      double scale = 2.0 * ny.grad[0] / static_cast<double>(tcopy.size());
      for (std::size_t i = 0; i < tcopy.size(); ++i) {
        np2.grad[i] += scale * (np2.data[i] - tcopy[i]);
      }
    };
  }
  return id;
}

TensorId Graph::sum(TensorId x) {
  const Node& nx = node(x);
  double acc = 0.0;
  for (double v : nx.data) acc += v;
  Node out;
  out.shape = {1};
  out.data = {acc};
  TensorId id = push(std::move(out));
  if (recording_) {
    node(id).backward_fn = [this, x, id]() {
      Node& nx2 = node(x);
      Node& ny = node(id);
      for (double& g : nx2.grad) g += ny.grad[0];
    };
  }
  return id;
}

void Graph::backward(TensorId loss) {
  if (!recording_) throw InvalidInputError("backward on a non-recording graph");
  if (backward_done_) throw InvalidInputError("backward already run; build a fresh graph");
  Node& nl = node(loss);
  if (nl.data.size() != 1) {
    throw InvalidInputError("backward needs a scalar loss, got " + shape_str(nl.shape));
  }
  backward_done_ = true;
  nl.grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (static_cast<TensorId>(i) > loss) continue;
    if (nodes_[i].backward_fn) nodes_[i].backward_fn();
  }
  for (Node& n : nodes_) {
    if (!n.bound) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
  }
}

}  // namespace voc::nn
