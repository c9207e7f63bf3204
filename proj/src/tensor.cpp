#include "synmt/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace synmt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

struct Dims {
  std::size_t r, c;
};

Dims dims_of(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(t.shape()));
}

Tape* tape_of(std::initializer_list<Var> vars, const char* op) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw UsageError(std::string(op) + ": invalid variable");
    if (tape && v.tape() != tape) throw UsageError(std::string(op) + ": operands live on different tapes");
    tape = v.tape();
  }
  return tape;
}

void require_finite(const Tensor& t, const char* op) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Elementwise binary op with 2-D broadcasting of dimensions equal to 1.
template <typename F, typename DA, typename DB>
Var broadcast_binary(Var a, Var b, const char* op, F f, DA dfa, DB dfb) {
  Tape* tape = tape_of({a, b}, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Dims da = dims_of(av, op), db = dims_of(bv, op);
  auto fit = [](std::size_t x, std::size_t y) { return x == y || x == 1 || y == 1; };
  if (!fit(da.r, db.r) || !fit(da.c, db.c)) shape_mismatch(op, av, bv);
  const std::size_t R = std::max(da.r, db.r), C = std::max(da.c, db.c);

  Shape out_shape = (av.shape() == bv.shape()) ? av.shape() : Shape{R, C};
  Tensor out(out_shape);
  const bool same = da.r == db.r && da.c == db.c;
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const double x = av[(da.r == 1 ? 0 : r) * da.c + (da.c == 1 ? 0 : c)];
        const double y = bv[(db.r == 1 ? 0 : r) * db.c + (db.c == 1 ? 0 : c)];
        out[r * C + c] = f(x, y);
      }
    }
  }
  return tape->record(std::move(out), {a, b}, [a, b, da, db, R, C, same, dfa, dfb](Tape& t, const Tensor&, std::span<const double> g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool ga = t.needs_grad(a), gb = t.needs_grad(b);
    std::span<double> gA = ga ? t.grad(a) : std::span<double>{};
    std::span<double> gB = gb ? t.grad(b) : std::span<double>{};
    if (same) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (ga) gA[i] += g[i] * dfa(av[i], bv[i]);
        if (gb) gB[i] += g[i] * dfb(av[i], bv[i]);
      }
      return;
    }
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t ia = (da.r == 1 ? 0 : r) * da.c + (da.c == 1 ? 0 : c);
        const std::size_t ib = (db.r == 1 ? 0 : r) * db.c + (db.c == 1 ? 0 : c);
        const double gi = g[r * C + c];
        if (ga) gA[ia] += gi * dfa(av[ia], bv[ib]);
        if (gb) gB[ib] += gi * dfb(av[ia], bv[ib]);
      }
    }
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }
std::size_t Tensor::cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }

std::vector<double>& Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

// ---- Tape -----------------------------------------------------------------

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::param(const Tensor& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.param = &p;
  n.needs_grad = record_ && p.requires_grad;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& v : inputs) {
      if (nodes_[v.id()].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) {
      n.inputs.reserve(inputs.size());
      for (const Var& v : inputs) n.inputs.push_back(v.id());
      n.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::span<double> Tape::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (n.param) return param_grad(n);
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw UsageError("backward: loss belongs to another tape");
  if (!record_) throw UsageError("backward: tape was built without gradient recording");
  if (loss.value().size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  for (auto& [p, id] : param_nodes_) {
    if (nodes_[id].needs_grad) param_grad(nodes_[id]);
  }
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss)[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.value, n.grad);
    // Interior gradients are no longer needed once propagated.
    std::vector<double>().swap(n.grad);
  }
}

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape* tape = tape_of({a, b}, "matmul");
  const Dims da = dims_of(a.value(), "matmul"), db = dims_of(b.value(), "matmul");
  if (da.c != db.r) shape_mismatch("matmul", a.value(), b.value());
  Tensor out({da.r, db.c});
  Map(out.data().data(), da.r, db.c).noalias() =
      MapC(a.value().data().data(), da.r, da.c) * MapC(b.value().data().data(), db.r, db.c);
  return tape->record(std::move(out), {a, b}, [a, b, da, db](Tape& t, const Tensor&, std::span<const double> g) {
    MapC G(g.data(), da.r, db.c);
    if (t.needs_grad(a)) {
      Map(t.grad(a).data(), da.r, da.c).noalias() += G * MapC(b.value().data().data(), db.r, db.c).transpose();
    }
    if (t.needs_grad(b)) {
      Map(t.grad(b).data(), db.r, db.c).noalias() += MapC(a.value().data().data(), da.r, da.c).transpose() * G;
    }
  });
}

Var add(Var a, Var b) {
  return broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  Tape* tape = tape_of({a}, "scale");
  Tensor out = a.value();
  out.requires_grad = false;
  for (double& x : out.data()) x *= s;
  return tape->record(std::move(out), {a}, [a, s](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var one_minus(Var a) {
  Tape* tape = tape_of({a}, "one_minus");
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - av[i];
  return tape->record(std::move(out), {a}, [a](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no operands");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  Tape* tape = parts[0].tape();
  std::vector<Dims> ds;
  ds.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.tape() != tape) throw UsageError("concat: operands live on different tapes");
    ds.push_back(dims_of(p.value(), "concat"));
  }
  std::size_t R = 0, C = 0;
  if (axis == 0) {
    C = ds[0].c;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds[i].c != C) shape_mismatch("concat", parts[0].value(), parts[i].value());
      R += ds[i].r;
    }
  } else {
    R = ds[0].r;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds[i].r != R) shape_mismatch("concat", parts[0].value(), parts[i].value());
      C += ds[i].c;
    }
  }
  Tensor out({R, C});
  if (axis == 0) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
      off += p.value().size();
    }
  } else {
    std::size_t col = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Tensor& pv = parts[i].value();
      for (std::size_t r = 0; r < R; ++r) {
        std::copy_n(pv.data().begin() + r * ds[i].c, ds[i].c, out.data().begin() + r * C + col);
      }
      col += ds[i].c;
    }
  }
  return tape->record(std::move(out), parts, [parts, ds, axis, R, C](Tape& t, const Tensor&, std::span<const double> g) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::size_t w = axis == 0 ? ds[i].r * ds[i].c : ds[i].c;
      if (t.needs_grad(parts[i])) {
        auto gp = t.grad(parts[i]);
        if (axis == 0) {
          for (std::size_t k = 0; k < w; ++k) gp[k] += g[off + k];
        } else {
          for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * C + off + c];
          }
        }
      }
      off += w;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape* tape = tape_of({a}, "slice_cols");
  const Dims d = dims_of(a.value(), "slice_cols");
  if (begin > end || end > d.c) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({d.r, w});
  for (std::size_t r = 0; r < d.r; ++r) {
    std::copy_n(a.value().data().begin() + r * d.c + begin, w, out.data().begin() + r * w);
  }
  return tape->record(std::move(out), {a}, [a, d, begin, w](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t r = 0; r < d.r; ++r) {
      for (std::size_t c = 0; c < w; ++c) ga[r * d.c + begin + c] += g[r * w + c];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape* tape = tape_of({a}, "slice_rows");
  const Dims d = dims_of(a.value(), "slice_rows");
  if (begin > end || end > d.r) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for " + shape_str(a.shape()));
  }
  Tensor out({end - begin, d.c});
  std::copy(a.value().data().begin() + begin * d.c, a.value().data().begin() + end * d.c, out.data().begin());
  return tape->record(std::move(out), {a}, [a, d, begin](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * d.c + i] += g[i];
  });
}

Var lookup(Var table, std::span<const std::int32_t> ids) {
  Tape* tape = tape_of({table}, "lookup");
  const Dims d = dims_of(table.value(), "lookup");
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  for (std::int32_t id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= d.r) {
      throw DimensionError("lookup: id " + std::to_string(id) + " outside table " + shape_str(table.shape()));
    }
  }
  Tensor out({idx.size(), d.c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(table.value().data().begin() + idx[i] * d.c, d.c, out.data().begin() + i * d.c);
  }
  return tape->record(std::move(out), {table}, [table, d, idx = std::move(idx)](Tape& t, const Tensor&, std::span<const double> g) {
    auto gt = t.grad(table);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* row = gt.data() + idx[i] * d.c;
      for (std::size_t c = 0; c < d.c; ++c) row[c] += g[i * d.c + c];
    }
  });
}

Var tile_rows(Var a, std::size_t k) {
  Tape* tape = tape_of({a}, "tile_rows");
  const Dims d = dims_of(a.value(), "tile_rows");
  if (d.r != 1) throw DimensionError("tile_rows: expected a single row, got " + shape_str(a.shape()));
  Tensor out({k, d.c});
  for (std::size_t r = 0; r < k; ++r) std::copy_n(a.value().data().begin(), d.c, out.data().begin() + r * d.c);
  return tape->record(std::move(out), {a}, [a, d, k](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < d.c; ++c) ga[c] += g[r * d.c + c];
    }
  });
}


Var sigmoid(Var a) {
  Tape* tape = tape_of({a}, "sigmoid");
  require_finite(a.value(), "sigmoid");
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  return tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& y, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var a) {
  Tape* tape = tape_of({a}, "tanh");
  require_finite(a.value(), "tanh");
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& y, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var softmax(Var a, const Tensor* mask) {
  Tape* tape = tape_of({a}, "softmax");
  require_finite(a.value(), "softmax");
  const Dims d = dims_of(a.value(), "softmax");
  if (mask && mask->size() != a.value().size()) {
    throw DimensionError("softmax: mask " + shape_str(mask->shape()) + " does not match " + shape_str(a.shape()));
  }
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t r = 0; r < d.r; ++r) {
    const std::size_t base = r * d.c;
    auto keep = [&](std::size_t c) { return !mask || (*mask)[base + c] != 0.0; };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < d.c; ++c) {
      if (keep(c)) mx = std::max(mx, av[base + c]);
    }
    if (!std::isfinite(mx)) throw UsageError("softmax: row " + std::to_string(r) + " has no unmasked entry");
    double z = 0.0;
    for (std::size_t c = 0; c < d.c; ++c) {
      const double e = keep(c) ? std::exp(av[base + c] - mx) : 0.0;
      out[base + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < d.c; ++c) out[base + c] /= z;
  }
  return tape->record(std::move(out), {a}, [a, d](Tape& t, const Tensor& y, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t r = 0; r < d.r; ++r) {
      const std::size_t base = r * d.c;
      double dot = 0.0;
      for (std::size_t c = 0; c < d.c; ++c) dot += g[base + c] * y[base + c];
      for (std::size_t c = 0; c < d.c; ++c) ga[base + c] += y[base + c] * (g[base + c] - dot);
    }
  });
}

Var dropout(Var a, double rate, Rng& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  Tape* tape = tape_of({a}, "dropout");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.value().size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * mask[i];
  return tape->record(std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const double> weights) {
  Tape* tape = tape_of({logits}, "cross_entropy");
  const Dims d = dims_of(logits.value(), "cross_entropy");
  if (targets.size() != d.r || weights.size() != d.r) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(weights.size()) + " weights for logits " + shape_str(logits.shape()));
  }
  const Tensor& lv = logits.value();
  // Per-row softmax kept for backward.
  std::vector<double> prob(lv.size(), 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < d.r; ++r) {
    if (weights[r] == 0.0) continue;
    const std::int32_t y = targets[r];
    if (y < 0 || static_cast<std::size_t>(y) >= d.c) {
      throw DimensionError("cross_entropy: target " + std::to_string(y) + " outside " + std::to_string(d.c) +
                           " classes");
    }
    const std::size_t base = r * d.c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < d.c; ++c) {
      if (!std::isfinite(lv[base + c])) throw NumericError("cross_entropy: non-finite input");
      mx = std::max(mx, lv[base + c]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < d.c; ++c) {
      prob[base + c] = std::exp(lv[base + c] - mx);
      z += prob[base + c];
    }
    for (std::size_t c = 0; c < d.c; ++c) prob[base + c] /= z;
    loss += weights[r] * (std::log(z) + mx - lv[base + y]);
  }
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return tape->record(Tensor::scalar(loss), {logits},
                      [logits, d, prob = std::move(prob), tg = std::move(tg), w = std::move(w)](
                          Tape& t, const Tensor&, std::span<const double> g) {
                        auto gl = t.grad(logits);
                        for (std::size_t r = 0; r < d.r; ++r) {
                          if (w[r] == 0.0) continue;
                          const std::size_t base = r * d.c;
                          const double s = g[0] * w[r];
                          for (std::size_t c = 0; c < d.c; ++c) gl[base + c] += s * prob[base + c];
                          gl[base + tg[r]] -= s;
                        }
                      });
}

Var sum(Var a) {
  Tape* tape = tape_of({a}, "sum");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return tape->record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad(a);
    for (double& x : ga) x += g[0];
  });
}

Var gather_steps(const std::vector<Var>& seq, std::span<const std::int32_t> index) {
  if (seq.empty()) throw UsageError("gather_steps: empty sequence");
  Tape* tape = seq[0].tape();
  const Dims d = dims_of(seq[0].value(), "gather_steps");
  if (index.size() != d.r) {
    throw DimensionError("gather_steps: " + std::to_string(index.size()) + " indices for " + std::to_string(d.r) +
                         " rows");
  }
  for (const Var& v : seq) {
    if (v.tape() != tape) throw UsageError("gather_steps: operands live on different tapes");
    const Dims dv = dims_of(v.value(), "gather_steps");
    if (dv.r != d.r || dv.c != d.c) shape_mismatch("gather_steps", seq[0].value(), v.value());
  }
  std::vector<std::int32_t> idx(index.begin(), index.end());
  Tensor out({d.r, d.c});
  for (std::size_t r = 0; r < d.r; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= seq.size()) {
      throw DimensionError("gather_steps: index " + std::to_string(idx[r]) + " outside sequence of length " +
                           std::to_string(seq.size()));
    }
    std::copy_n(seq[idx[r]].value().data().begin() + r * d.c, d.c, out.data().begin() + r * d.c);
  }
  return tape->record(std::move(out), seq, [seq, idx = std::move(idx), d](Tape& t, const Tensor&, std::span<const double> g) {
    for (std::size_t r = 0; r < d.r; ++r) {
      const Var& src = seq[idx[r]];
      if (!t.needs_grad(src)) continue;
      auto gs = t.grad(src);
      for (std::size_t c = 0; c < d.c; ++c) gs[r * d.c + c] += g[r * d.c + c];
    }
  });
}

Var weighted_sum(Var weights, const std::vector<Var>& values) {
  Tape* tape = tape_of({weights}, "weighted_sum");
  const Dims dw = dims_of(weights.value(), "weighted_sum");
  if (values.size() != dw.c) {
    throw DimensionError("weighted_sum: weights " + shape_str(weights.shape()) + " for " +
                         std::to_string(values.size()) + " values");
  }
  if (values.empty()) throw UsageError("weighted_sum: no values");
  const Dims dv = dims_of(values[0].value(), "weighted_sum");
  for (const Var& v : values) {
    if (v.tape() != tape) throw UsageError("weighted_sum: operands live on different tapes");
    const Dims d = dims_of(v.value(), "weighted_sum");
    if (d.r != dw.r || d.c != dv.c) shape_mismatch("weighted_sum", weights.value(), v.value());
  }
  const Tensor& wv = weights.value();
  Tensor out({dw.r, dv.c});
  for (std::size_t j = 0; j < values.size(); ++j) {
    const Tensor& hv = values[j].value();
    for (std::size_t r = 0; r < dw.r; ++r) {
      const double a = wv[r * dw.c + j];
      for (std::size_t c = 0; c < dv.c; ++c) out[r * dv.c + c] += a * hv[r * dv.c + c];
    }
  }
  std::vector<Var> inputs = values;
  inputs.push_back(weights);
  return tape->record(std::move(out), inputs, [weights, values, dw, dv](Tape& t, const Tensor&, std::span<const double> g) {
    const Tensor& wv = weights.value();
    const bool gw = t.needs_grad(weights);
    std::span<double> gW = gw ? t.grad(weights) : std::span<double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const Tensor& hv = values[j].value();
      const bool gh = t.needs_grad(values[j]);
      std::span<double> gH = gh ? t.grad(values[j]) : std::span<double>{};
      for (std::size_t r = 0; r < dw.r; ++r) {
        const double a = wv[r * dw.c + j];
        double dot = 0.0;
        for (std::size_t c = 0; c < dv.c; ++c) {
          const double gi = g[r * dv.c + c];
          dot += gi * hv[r * dv.c + c];
          if (gh) gH[r * dv.c + c] += a * gi;
        }
        if (gw) gW[r * dw.c + j] += dot;
      }
    }
  });
}

// ---- gradient checking ----------------------------------------------------

double grad_check(const std::function<Var(Tape&)>& loss_fn, const std::vector<Tensor*>& params, double epsilon,
                  std::size_t max_coords_per_param, Rng& rng) {
  if (epsilon < 1e-6 || epsilon > 1e-3) throw UsageError("grad_check: epsilon must lie in [1e-6, 1e-3]");
  for (Tensor* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape tape(false);
    return loss_fn(tape).value()[0];
  };
  double worst = 0.0;
  for (Tensor* p : params) {
    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double saved = (*p)[i];
      (*p)[i] = saved + epsilon;
      const double up = eval();
      (*p)[i] = saved - epsilon;
      const double down = eval();
      (*p)[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad()[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace synmt
