#include "ftx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ftx/errors.hpp"

namespace ftx {

namespace {

thread_local int no_grad_depth = 0;

std::size_t shape_product(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

bool track_any(const Tensor& a) { return grad_enabled() && a.on_graph(); }

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ")";
  return os.str();
}

namespace detail {

void TensorImpl::accumulate(const double* g, std::size_t n) {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
}

}  // namespace detail

// --- Tensor ----------------------------------------------------------------

Tensor make_op_output(Shape shape, std::vector<double> data, bool track) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->on_graph = track;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_product(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("from_data: shape " + shape_str(shape) + " implies " +
                     std::to_string(shape_product(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->on_graph = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows(): tensor is " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols(): tensor is " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::value() const {
  if (size() != 1) {
    throw ShapeError("value(): tensor " + shape_str(shape()) +
                     " is not a single element");
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data.at(r * cols() + c);
}

std::vector<double>& Tensor::data() { return impl_->data; }
const std::vector<double>& Tensor::data() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::on_graph() const { return impl_ && impl_->on_graph; }

const std::vector<double>& Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

// --- Tape -------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  }
  Tape& tape = Tape::active();
  if (tape.consumed_) {
    throw std::logic_error(
        "backward: tape already consumed; run a new forward pass first");
  }
  if (tape.nodes_.empty()) {
    throw std::logic_error("backward: tape is empty");
  }
  auto impl = loss.impl();
  impl->grad.assign(1, 1.0);
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) (*it)();
  tape.consumed_ = true;
}

// --- op helpers --------------------------------------------------------------

namespace {

using detail::ImplPtr;

// Elementwise unary op with local derivative computed from input values.
template <typename FwdFn, typename GradFn>
Tensor unary_elementwise(const Tensor& a, FwdFn f, GradFn dfdx) {
  const auto& x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor out = make_op_output(a.shape(), std::move(y), track);
  if (track) {
    ImplPtr oi = out.impl();
    Tape::active().record([ai, oi, dfdx]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      for (std::size_t i = 0; i < ai->data.size(); ++i) {
        ai->grad[i] += oi->grad[i] * dfdx(ai->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw ShapeError("matmul: expected 2-D operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  const bool track = grad_enabled() && (a.on_graph() || b.on_graph());
  ImplPtr ai = a.impl(), bi = b.impl();
  Tensor res = make_op_output({m, n}, std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, bi, oi, m, k, n]() {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (ai->on_graph) {
        // dA = dC * B^T
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              acc += g[i * n + j] * bi->data[p * n + j];
            }
            ai->grad[i * k + p] += acc;
          }
        }
      }
      if (bi->on_graph) {
        // dB = A^T * dC
        if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              acc += ai->data[i * k + p] * g[i * n + j];
            }
            bi->grad[p * n + j] += acc;
          }
        }
      }
    });
  }
  return res;
}

Tensor add(const Tensor& a, const Tensor& b) {
  // Bias-row broadcast: [m x n] + [n].
  if (a.ndim() == 2 && b.ndim() == 1 && b.shape()[0] == a.cols()) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b.at(j);
    }
    const bool track = grad_enabled() && (a.on_graph() || b.on_graph());
    ImplPtr ai = a.impl(), bi = b.impl();
    Tensor res = make_op_output({m, n}, std::move(out), track);
    if (track) {
      ImplPtr oi = res.impl();
      Tape::active().record([ai, bi, oi, m, n]() {
        if (oi->grad.empty()) return;
        if (ai->on_graph) ai->accumulate(oi->grad.data(), m * n);
        if (bi->on_graph) {
          if (bi->grad.empty()) bi->grad.assign(n, 0.0);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              bi->grad[j] += oi->grad[i * n + j];
            }
          }
        }
      });
    }
    return res;
  }
  check_same_shape("add", a, b);
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  const bool track = grad_enabled() && (a.on_graph() || b.on_graph());
  ImplPtr ai = a.impl(), bi = b.impl();
  Tensor res = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, bi, oi]() {
      if (oi->grad.empty()) return;
      if (ai->on_graph) ai->accumulate(oi->grad.data(), oi->grad.size());
      if (bi->on_graph) bi->accumulate(oi->grad.data(), oi->grad.size());
    });
  }
  return res;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  const bool track = grad_enabled() && (a.on_graph() || b.on_graph());
  ImplPtr ai = a.impl(), bi = b.impl();
  Tensor res = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, bi, oi]() {
      if (oi->grad.empty()) return;
      if (ai->on_graph) ai->accumulate(oi->grad.data(), oi->grad.size());
      if (bi->on_graph) {
        if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0);
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
          bi->grad[i] -= oi->grad[i];
        }
      }
    });
  }
  return res;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  const bool track = grad_enabled() && (a.on_graph() || b.on_graph());
  ImplPtr ai = a.impl(), bi = b.impl();
  Tensor res = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, bi, oi]() {
      if (oi->grad.empty()) return;
      if (ai->on_graph) {
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
          ai->grad[i] += oi->grad[i] * bi->data[i];
        }
      }
      if (bi->on_graph) {
        if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0);
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
          bi->grad[i] += oi->grad[i] * ai->data[i];
        }
      }
    });
  }
  return res;
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= s;
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi, s]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i] * s;
      }
    });
  }
  return res;
}

Tensor relu(const Tensor& a) {
  // Subgradient 0 at the kink.
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  return unary_elementwise(
      a,
      [](double x) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      a,
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Tensor amplitude(const Tensor& re, const Tensor& im) {
  check_same_shape("amplitude", re, im);
  const auto& r = re.data();
  const auto& m = im.data();
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = std::hypot(r[i], m[i]);
  const bool track = grad_enabled() && (re.on_graph() || im.on_graph());
  ImplPtr ri = re.impl(), mi = im.impl();
  Tensor res = make_op_output(re.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ri, mi, oi]() {
      if (oi->grad.empty()) return;
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const double amp = oi->data[i];
        if (amp < 1e-12) continue;  // gradient zeroed near the origin
        const double g = oi->grad[i];
        if (ri->on_graph) {
          if (ri->grad.empty()) ri->grad.assign(ri->data.size(), 0.0);
          ri->grad[i] += g * ri->data[i] / amp;
        }
        if (mi->on_graph) {
          if (mi->grad.empty()) mi->grad.assign(mi->data.size(), 0.0);
          mi->grad[i] += g * mi->data[i] / amp;
        }
      }
    });
  }
  return res;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t nd = parts[0].ndim();
  if (axis >= nd) {
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(parts[0].shape()));
  }
  for (const Tensor& p : parts) {
    if (p.ndim() != nd) throw ShapeError("concat: mixed ranks");
    for (std::size_t d = 0; d < nd; ++d) {
      if (d != axis && p.shape()[d] != parts[0].shape()[d]) {
        throw ShapeError("concat: shape mismatch " +
                         shape_str(parts[0].shape()) + " vs " +
                         shape_str(p.shape()));
      }
    }
  }
  if (nd == 1) {
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const Tensor& p : parts) {
      offsets.push_back(out.size());
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    bool track = false;
    for (const Tensor& p : parts) track = track || p.on_graph();
    track = track && grad_enabled();
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    Tensor res = make_op_output({out.size()}, std::move(out), track);
    if (track) {
      ImplPtr oi = res.impl();
      Tape::active().record([impls, offsets, oi]() {
        if (oi->grad.empty()) return;
        for (std::size_t p = 0; p < impls.size(); ++p) {
          if (!impls[p]->on_graph) continue;
          impls[p]->accumulate(oi->grad.data() + offsets[p],
                               impls[p]->data.size());
        }
      });
    }
    return res;
  }
  if (nd != 2) throw ShapeError("concat: only 1-D and 2-D supported");
  const std::size_t common = parts[0].shape()[1 - axis];
  std::size_t total = 0;
  for (const Tensor& p : parts) total += p.shape()[axis];
  Shape out_shape = axis == 0 ? Shape{total, common} : Shape{common, total};
  std::vector<double> out(total * common);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const std::size_t pr = p.shape()[0], pc = p.shape()[1];
    for (std::size_t i = 0; i < pr; ++i) {
      for (std::size_t j = 0; j < pc; ++j) {
        if (axis == 0) {
          out[(off + i) * common + j] = p.at(i, j);
        } else {
          out[i * total + (off + j)] = p.at(i, j);
        }
      }
    }
    off += p.shape()[axis];
  }
  bool track = false;
  for (const Tensor& p : parts) track = track || p.on_graph();
  track = track && grad_enabled();
  std::vector<ImplPtr> impls;
  for (const Tensor& p : parts) impls.push_back(p.impl());
  Tensor res = make_op_output(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([impls, offsets, oi, axis, total, common]() {
      if (oi->grad.empty()) return;
      for (std::size_t p = 0; p < impls.size(); ++p) {
        auto& part = impls[p];
        if (!part->on_graph) continue;
        if (part->grad.empty()) part->grad.assign(part->data.size(), 0.0);
        const std::size_t pr = part->shape[0], pc = part->shape[1];
        const std::size_t off2 = offsets[p];
        for (std::size_t i = 0; i < pr; ++i) {
          for (std::size_t j = 0; j < pc; ++j) {
            const double g = axis == 0 ? oi->grad[(off2 + i) * common + j]
                                       : oi->grad[i * total + (off2 + j)];
            part->grad[i * pc + j] += g;
          }
        }
      }
    });
  }
  return res;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  return concat(std::vector<Tensor>{a, b}, axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  if (a.ndim() == 1) {
    if (axis != 0 || begin > end || end > a.shape()[0]) {
      throw ShapeError("slice: invalid range [" + std::to_string(begin) +
                       ", " + std::to_string(end) + ") axis " +
                       std::to_string(axis) + " for " + shape_str(a.shape()));
    }
    std::vector<double> out(a.data().begin() + static_cast<long>(begin),
                            a.data().begin() + static_cast<long>(end));
    const bool track = track_any(a);
    ImplPtr ai = a.impl();
    Tensor res = make_op_output({end - begin}, std::move(out), track);
    if (track) {
      ImplPtr oi = res.impl();
      Tape::active().record([ai, oi, begin]() {
        if (oi->grad.empty()) return;
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
          ai->grad[begin + i] += oi->grad[i];
        }
      });
    }
    return res;
  }
  if (a.ndim() != 2 || axis > 1 || begin > end || end > a.shape()[axis]) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") axis " + std::to_string(axis) +
                     " for " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t span = end - begin;
  Shape out_shape = axis == 0 ? Shape{span, n} : Shape{m, span};
  std::vector<double> out(span * (axis == 0 ? n : m));
  if (axis == 0) {
    std::copy(a.data().begin() + static_cast<long>(begin * n),
              a.data().begin() + static_cast<long>(end * n), out.begin());
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < span; ++j) {
        out[i * span + j] = a.at(i, begin + j);
      }
    }
  }
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi, axis, begin, m, n, span]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      if (axis == 0) {
        for (std::size_t i = 0; i < span * n; ++i) {
          ai->grad[begin * n + i] += oi->grad[i];
        }
      } else {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < span; ++j) {
            ai->grad[i * n + begin + j] += oi->grad[i * span + j];
          }
        }
      }
    });
  }
  return res;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) {
    throw ShapeError("transpose: expected 2-D, got " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  }
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output({n, m}, std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi, m, n]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          ai->grad[i * n + j] += oi->grad[j * m + i];
        }
      }
    });
  }
  return res;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_product(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output(std::move(shape), a.data(), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi]() {
      if (oi->grad.empty()) return;
      ai->accumulate(oi->grad.data(), oi->grad.size());
    });
  }
  return res;
}

Tensor expand_rows(const Tensor& row, std::size_t m) {
  if (row.ndim() != 1) {
    throw ShapeError("expand_rows: expected 1-D, got " +
                     shape_str(row.shape()));
  }
  const std::size_t n = row.shape()[0];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(row.data().begin(), row.data().end(),
              out.begin() + static_cast<long>(i * n));
  }
  const bool track = track_any(row);
  ImplPtr ri = row.impl();
  Tensor res = make_op_output({m, n}, std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ri, oi, m, n]() {
      if (oi->grad.empty()) return;
      if (ri->grad.empty()) ri->grad.assign(n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ri->grad[j] += oi->grad[i * n + j];
      }
    });
  }
  return res;
}

namespace {

Tensor reduce_axis(const Tensor& a, std::size_t axis, bool take_mean,
                   const char* name) {
  if (a.ndim() != 2 || axis > 1) {
    throw ShapeError(std::string(name) + ": expected 2-D with axis 0 or 1, " +
                     "got " + shape_str(a.shape()) + " axis " +
                     std::to_string(axis));
  }
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t out_len = axis == 0 ? n : m;
  const std::size_t red_len = axis == 0 ? m : n;
  if (red_len == 0) {
    throw ShapeError(std::string(name) + ": empty reduction axis in " +
                     shape_str(a.shape()));
  }
  const double w = take_mean ? 1.0 / static_cast<double>(red_len) : 1.0;
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[axis == 0 ? j : i] += a.at(i, j);
    }
  }
  for (double& v : out) v *= w;
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output({out_len}, std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi, axis, m, n, w]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          ai->grad[i * n + j] += w * oi->grad[axis == 0 ? j : i];
        }
      }
    });
  }
  return res;
}

Tensor reduce_all(const Tensor& a, bool take_mean, const char* name) {
  if (a.size() == 0) {
    throw ShapeError(std::string(name) + ": empty tensor");
  }
  const double w =
      take_mean ? 1.0 / static_cast<double>(a.size()) : 1.0;
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  acc *= w;
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output({}, {acc}, track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi, w]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      for (double& g : ai->grad) g += w * oi->grad[0];
    });
  }
  return res;
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) {
  return reduce_axis(a, axis, false, "sum");
}

Tensor mean(const Tensor& a, std::size_t axis) {
  return reduce_axis(a, axis, true, "mean");
}

Tensor sum_all(const Tensor& a) { return reduce_all(a, false, "sum_all"); }

Tensor mean_all(const Tensor& a) { return reduce_all(a, true, "mean_all"); }

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (a.ndim() == 0 || (a.ndim() == 1 && axis != 0) ||
      (a.ndim() == 2 && axis > 1) || a.ndim() > 2) {
    throw ShapeError("softmax: invalid axis " + std::to_string(axis) +
                     " for " + shape_str(a.shape()));
  }
  const std::size_t slices = a.ndim() == 1 ? 1 : (axis == 0 ? a.cols() : a.rows());
  const std::size_t len = a.ndim() == 1 ? a.shape()[0]
                                        : (axis == 0 ? a.rows() : a.cols());
  if (len == 0) {
    throw ShapeError("softmax: empty axis in " + shape_str(a.shape()));
  }
  // stride between consecutive elements of one slice, and between slices
  const std::size_t step = (a.ndim() == 2 && axis == 0) ? a.cols() : 1;
  const std::size_t slice_step = (a.ndim() == 2 && axis == 0) ? 1 : len;
  std::vector<double> out(a.size());
  const auto& x = a.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t base = s * slice_step;
    double mx = x[base];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * step]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[base + i * step] - mx);
      out[base + i * step] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * step] /= z;
  }
  const bool track = track_any(a);
  ImplPtr ai = a.impl();
  Tensor res = make_op_output(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, oi, slices, len, step, slice_step]() {
      if (oi->grad.empty()) return;
      if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.0);
      for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t base = s * slice_step;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          dot += oi->grad[base + i * step] * oi->data[base + i * step];
        }
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t idx = base + i * step;
          ai->grad[idx] += oi->data[idx] * (oi->grad[idx] - dot);
        }
      }
    });
  }
  return res;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  if (eps <= 0.0) throw ShapeError("layernorm: eps must be positive");
  if (x.ndim() == 0 || x.ndim() > 2) {
    throw ShapeError("layernorm: expected 1-D or 2-D, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.ndim() == 1 ? x.shape()[0] : x.cols();
  const std::size_t m = x.ndim() == 1 ? 1 : x.rows();
  if (n == 0) {
    throw ShapeError("layernorm: empty last axis in " + shape_str(x.shape()));
  }
  if (gain.ndim() != 1 || gain.shape()[0] != n || bias.ndim() != 1 ||
      bias.shape()[0] != n) {
    throw ShapeError("layernorm: gain/bias must be 1-D of length " +
                     std::to_string(n) + ", got " + shape_str(gain.shape()) +
                     " and " + shape_str(bias.shape()));
  }
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_sd(m);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);  // population variance
    const double isd = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = isd;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[i * n + j] - mu) * isd;
      xhat[i * n + j] = h;
      out[i * n + j] = gain.at(j) * h + bias.at(j);
    }
  }
  const bool track = grad_enabled() &&
                     (x.on_graph() || gain.on_graph() || bias.on_graph());
  ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl();
  Tensor res = make_op_output(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr oi = res.impl();
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto isd = std::make_shared<std::vector<double>>(std::move(inv_sd));
    Tape::active().record([xi, gi, bi, oi, xh, isd, m, n]() {
      if (oi->grad.empty()) return;
      for (std::size_t i = 0; i < m; ++i) {
        // dy' = gain .* dy for this slice
        double mean_dy = 0.0, mean_dyxh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dyp = oi->grad[i * n + j] * gi->data[j];
          mean_dy += dyp;
          mean_dyxh += dyp * (*xh)[i * n + j];
        }
        mean_dy /= static_cast<double>(n);
        mean_dyxh /= static_cast<double>(n);
        if (xi->on_graph) {
          if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.0);
          for (std::size_t j = 0; j < n; ++j) {
            const double dyp = oi->grad[i * n + j] * gi->data[j];
            xi->grad[i * n + j] +=
                (*isd)[i] * (dyp - mean_dy - (*xh)[i * n + j] * mean_dyxh);
          }
        }
        if (gi->on_graph) {
          if (gi->grad.empty()) gi->grad.assign(n, 0.0);
          for (std::size_t j = 0; j < n; ++j) {
            gi->grad[j] += oi->grad[i * n + j] * (*xh)[i * n + j];
          }
        }
        if (bi->on_graph) {
          if (bi->grad.empty()) bi->grad.assign(n, 0.0);
          for (std::size_t j = 0; j < n; ++j) {
            bi->grad[j] += oi->grad[i * n + j];
          }
        }
      }
    });
  }
  return res;
}

namespace {

Tensor pair_loss(const Tensor& a, const Tensor& b, bool squared,
                 const char* name) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(name) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.size() == 0) throw ShapeError(std::string(name) + ": empty input");
  const std::size_t n = a.size();
  const double w = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += squared ? d * d : std::abs(d);
  }
  acc *= w;
  const bool track = grad_enabled() && (a.on_graph() || b.on_graph());
  ImplPtr ai = a.impl(), bi = b.impl();
  Tensor res = make_op_output({}, {acc}, track);
  if (track) {
    ImplPtr oi = res.impl();
    Tape::active().record([ai, bi, oi, n, w, squared]() {
      if (oi->grad.empty()) return;
      const double g0 = oi->grad[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double d = ai->data[i] - bi->data[i];
        // subgradient 0 at d == 0 for the absolute error
        const double local =
            squared ? 2.0 * d : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        const double g = g0 * w * local;
        if (ai->on_graph) {
          if (ai->grad.empty()) ai->grad.assign(n, 0.0);
          ai->grad[i] += g;
        }
        if (bi->on_graph) {
          if (bi->grad.empty()) bi->grad.assign(n, 0.0);
          bi->grad[i] -= g;
        }
      }
    });
  }
  return res;
}

}  // namespace

Tensor mse(const Tensor& a, const Tensor& b) {
  return pair_loss(a, b, true, "mse");
}

Tensor mae(const Tensor& a, const Tensor& b) {
  return pair_loss(a, b, false, "mae");
}

}  // namespace ftx
