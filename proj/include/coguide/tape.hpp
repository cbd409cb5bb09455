#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coguide/tensor.hpp"

namespace coguide {

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Append-only reverse-mode tape over Tensor-valued nodes. Creation order is
// a topological order, so the backward pass is a single reverse sweep.
// Every op checks its result for NaN/Inf and throws on violation.
class Tape {
 public:
  Var leaf(Tensor value) { return push(std::move(value), {}); }
  Var constant(Tensor value) { return push(std::move(value), {}); }
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // ---- elementwise / arithmetic ----

  Var add(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb), "add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out = va;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      t.axpy(a, 1.0, n.grad);
      t.axpy(b, 1.0, n.grad);
    });
  }

  Var add_n(const std::vector<Var>& xs) {
    require(!xs.empty(), "add_n: empty input");
    Tensor out = value(xs[0]);
    for (std::size_t k = 1; k < xs.size(); ++k) {
      const Tensor& v = value(xs[k]);
      require(v.same_shape(out), "add_n: shape mismatch");
      for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += v[i];
    }
    return push(std::move(out), xs, [xs](Tape& t, const Node& n) {
      for (Var x : xs) t.axpy(x, 1.0, n.grad);
    });
  }

  Var sub(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb), "sub: shape mismatch");
    Tensor out = va;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      t.axpy(a, 1.0, n.grad);
      t.axpy(b, -1.0, n.grad);
    });
  }

  Var mul(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb), "mul: shape mismatch");
    Tensor out = va;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Node& n) {
      const Tensor &va = t.value(a), &vb = t.value(b);
      Tensor& ga = t.grad_ref(a);
      Tensor& gb = t.grad_ref(b);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        ga[i] += n.grad[i] * vb[i];
        gb[i] += n.grad[i] * va[i];
      }
    });
  }

  Var scale(Var a, double c) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return push(std::move(out), {a}, [a, c](Tape& t, const Node& n) {
      t.axpy(a, c, n.grad);
    });
  }

  Var add_const(Var a, double c) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      t.axpy(a, 1.0, n.grad);
    });
  }

  // s * v with s a scalar var and v a vector var
  Var mul_sv(Var s, Var v) {
    require(value(s).numel() == 1, "mul_sv: first arg must be scalar");
    double sv = value(s)[0];
    Tensor out = value(v);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
    return push(std::move(out), {s, v}, [s, v](Tape& t, const Node& n) {
      const Tensor& vv = t.value(v);
      double sv = t.value(s)[0];
      double sacc = 0.0;
      Tensor& gv = t.grad_ref(v);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        sacc += n.grad[i] * vv[i];
        gv[i] += n.grad[i] * sv;
      }
      t.grad_ref(s)[0] += sacc;
    });
  }

  // v_i - s, broadcasting the scalar s over the vector v
  Var sub_bs(Var v, Var s) {
    require(value(s).numel() == 1, "sub_bs: second arg must be scalar");
    double sv = value(s)[0];
    Tensor out = value(v);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= sv;
    return push(std::move(out), {v, s}, [v, s](Tape& t, const Node& n) {
      double acc = 0.0;
      Tensor& gv = t.grad_ref(v);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        gv[i] += n.grad[i];
        acc += n.grad[i];
      }
      t.grad_ref(s)[0] -= acc;
    });
  }

  Var div_ss(Var a, Var b) {
    require(value(a).numel() == 1 && value(b).numel() == 1, "div_ss: scalars only");
    double av = value(a)[0], bv = value(b)[0];
    require(bv != 0.0, "div_ss: division by zero");
    return push(Tensor::scalar(av / bv), {a, b}, [a, b](Tape& t, const Node& n) {
      double g = n.grad[0];
      double av = t.value(a)[0], bv = t.value(b)[0];
      t.grad_ref(a)[0] += g / bv;
      t.grad_ref(b)[0] -= g * av / (bv * bv);
    });
  }

  // ---- linear algebra ----

  // y = W x, W: [m x k], x: [k]
  Var matvec(Var w, Var x) {
    const Tensor &W = value(w), &X = value(x);
    require(W.rank() == 2 && X.rank() == 1 && W.cols() == X.dim(0),
            "matvec: shape mismatch " + W.shape_str() + " * " + X.shape_str());
    int m = W.rows(), k = W.cols();
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
      const double* row = W.data() + static_cast<std::size_t>(i) * k;
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += row[j] * X[j];
      out[i] = acc;
    }
    return push(std::move(out), {w, x}, [w, x](Tape& t, const Node& n) {
      const Tensor &W = t.value(w), &X = t.value(x);
      Tensor& gw = t.grad_ref(w);
      Tensor& gx = t.grad_ref(x);
      int m = W.rows(), k = W.cols();
      for (int i = 0; i < m; ++i) {
        double gi = n.grad[i];
        if (gi == 0.0) continue;
        double* gwr = gw.data() + static_cast<std::size_t>(i) * k;
        const double* wr = W.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
          gwr[j] += gi * X[j];
          gx[j] += gi * wr[j];
        }
      }
    });
  }

  Var dot(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb) && va.rank() == 1, "dot: vector shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < va.numel(); ++i) acc += va[i] * vb[i];
    return push(Tensor::scalar(acc), {a, b}, [a, b](Tape& t, const Node& n) {
      double g = n.grad[0];
      const Tensor &va = t.value(a), &vb = t.value(b);
      Tensor& ga = t.grad_ref(a);
      Tensor& gb = t.grad_ref(b);
      for (std::int64_t i = 0; i < va.numel(); ++i) {
        ga[i] += g * vb[i];
        gb[i] += g * va[i];
      }
    });
  }

  // ---- structure ----

  Var concat(const std::vector<Var>& xs) {
    require(!xs.empty(), "concat: empty input");
    std::int64_t total = 0;
    for (Var x : xs) total += value(x).numel();
    Tensor out({static_cast<int>(total)});
    std::int64_t off = 0;
    for (Var x : xs) {
      const Tensor& v = value(x);
      for (std::int64_t i = 0; i < v.numel(); ++i) out[off + i] = v[i];
      off += v.numel();
    }
    return push(std::move(out), xs, [xs](Tape& t, const Node& n) {
      std::int64_t off = 0;
      for (Var x : xs) {
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[off + i];
        off += gx.numel();
      }
    });
  }

  Var slice(Var a, int offset, int len) {
    const Tensor& v = value(a);
    require(v.rank() == 1 && offset >= 0 && offset + len <= v.dim(0), "slice: out of range");
    Tensor out({len});
    for (int i = 0; i < len; ++i) out[i] = v[offset + i];
    return push(std::move(out), {a}, [a, offset, len](Tape& t, const Node& n) {
      Tensor& ga = t.grad_ref(a);
      for (int i = 0; i < len; ++i) ga[offset + i] += n.grad[i];
    });
  }

  Var pick(Var a, int index) {
    const Tensor& v = value(a);
    require(index >= 0 && index < v.numel(), "pick: index out of range");
    return push(Tensor::scalar(v[index]), {a}, [a, index](Tape& t, const Node& n) {
      t.grad_ref(a)[index] += n.grad[0];
    });
  }

  // row r of a 2-d tensor (embedding lookup)
  Var row(Var m, int r) {
    const Tensor& v = value(m);
    require(v.rank() == 2 && r >= 0 && r < v.rows(), "row: index out of range");
    int c = v.cols();
    Tensor out({c});
    for (int j = 0; j < c; ++j) out[j] = v.at(r, j);
    return push(std::move(out), {m}, [m, r](Tape& t, const Node& n) {
      Tensor& gm = t.grad_ref(m);
      int c = gm.cols();
      for (int j = 0; j < c; ++j) gm.at(r, j) += n.grad[j];
    });
  }

  // ---- nonlinearities ----

  Var sigmoid(Var a) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        double y = n.value[i];
        ga[i] += n.grad[i] * y * (1.0 - y);
      }
    });
  }

  Var tanh(Var a) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        double y = n.value[i];
        ga[i] += n.grad[i] * (1.0 - y * y);
      }
    });
  }

  Var leaky_relu(Var a, double slope) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i)
      if (out[i] < 0.0) out[i] *= slope;
    return push(std::move(out), {a}, [a, slope](Tape& t, const Node& n) {
      const Tensor& x = t.value(a);
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        ga[i] += n.grad[i] * (x[i] > 0.0 ? 1.0 : slope);
    });
  }

  Var relu(Var a) { return leaky_relu(a, 0.0); }

  Var softmax(Var a) {
    const Tensor& x = value(a);
    require(x.rank() == 1 && x.numel() >= 1, "softmax: vector expected");
    double mx = x[0];
    for (std::int64_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
    Tensor out = x;
    double z = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      out[i] = std::exp(out[i] - mx);
      z += out[i];
    }
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= z;
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      double gy = 0.0;
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) gy += n.grad[i] * n.value[i];
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        ga[i] += n.value[i] * (n.grad[i] - gy);
    });
  }

  Var log(Var a) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      require(out[i] > 0.0, "log: non-positive input");
      out[i] = std::log(out[i]);
    }
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      const Tensor& x = t.value(a);
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] / x[i];
    });
  }

  Var exp(Var a) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * n.value[i];
    });
  }

  Var sqrt(Var a) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      require(out[i] >= 0.0, "sqrt: negative input");
      out[i] = std::sqrt(out[i]);
    }
    return push(std::move(out), {a}, [a](Tape& t, const Node& n) {
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        require(n.value[i] > 0.0, "sqrt: gradient at zero");
        ga[i] += n.grad[i] * 0.5 / n.value[i];
      }
    });
  }

  // clamp to [lo, hi]; gradient passes only strictly inside the interval
  Var clamp(Var a, double lo, double hi) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out[i] = std::min(hi, std::max(lo, out[i]));
    return push(std::move(out), {a}, [a, lo, hi](Tape& t, const Node& n) {
      const Tensor& x = t.value(a);
      Tensor& ga = t.grad_ref(a);
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        if (x[i] > lo && x[i] < hi) ga[i] += n.grad[i];
    });
  }

  // ---- reductions ----

  Var sum(Var a) {
    const Tensor& v = value(a);
    double acc = 0.0;
    for (std::int64_t i = 0; i < v.numel(); ++i) acc += v[i];
    return push(Tensor::scalar(acc), {a}, [a](Tape& t, const Node& n) {
      t.axpy_broadcast(a, n.grad[0]);
    });
  }

  // ---- backward ----

  void backward(Var loss) {
    require(loss.valid() && loss.id < static_cast<int>(nodes_.size()), "backward: bad var");
    require(value(loss).numel() == 1, "backward: loss must be scalar");
    for (auto& n : nodes_) {
      if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.shape());
      else
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) n.grad[i] = 0.0;
      n.touched = false;
    }
    nodes_[static_cast<std::size_t>(loss.id)].grad[0] = 1.0;
    nodes_[static_cast<std::size_t>(loss.id)].touched = true;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.touched && n.backward) n.backward(*this, n);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool touched = false;
    std::function<void(Tape&, const Node&)> backward;
  };

  const Node& node(Var v) const {
    require(v.valid() && v.id < static_cast<int>(nodes_.size()), "invalid var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  Tensor& grad_ref(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.touched = true;
    return n.grad;
  }

  void axpy(Var v, double c, const Tensor& g) {
    Tensor& dst = grad_ref(v);
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += c * g[i];
  }

  void axpy_broadcast(Var v, double c) {
    Tensor& dst = grad_ref(v);
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += c;
  }

  Var push(Tensor value, std::vector<Var> parents,
           std::function<void(Tape&, const Node&)> backward = nullptr) {
    require(value.all_finite(), "non-finite value produced by tape op");
    (void)parents;
    Node n;
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

// ---- small helpers on top of the op set ----

inline Var linear(Tape& t, Var w, Var x, Var b) { return t.add(t.matvec(w, x), b); }

inline Var mean_of(Tape& t, const std::vector<Var>& xs) {
  return t.scale(t.add_n(xs), 1.0 / static_cast<double>(xs.size()));
}

// cosine similarity divided by temperature: a.b / (|a| |b| tau)
inline Var cosine_sim(Tape& t, Var a, Var b, double tau) {
  require(tau > 0.0, "cosine_sim: tau must be positive");
  Var num = t.dot(a, b);
  Var na = t.sqrt(t.dot(a, a));
  Var nb = t.sqrt(t.dot(b, b));
  require(t.value(na)[0] > 0.0 && t.value(nb)[0] > 0.0, "cosine_sim: zero-norm vector");
  Var den = t.scale(t.mul(na, nb), tau);
  return t.div_ss(num, den);
}

}  // namespace coguide
