#include "clover/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace clover {

namespace {

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void check_vector(const Tensor& t, const char* op) {
  if (t.shape().size() != 1) throw ShapeError(std::string(op) + ": expected 1-d tensor, got " + shape_str(t.shape()));
}

void check_matrix(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  const int64_t n = shape_product(shape);
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = std::move(shape);
  if (values.empty()) {
    t.d_->values.assign(static_cast<size_t>(n), 0.0);
  } else {
    if (static_cast<int64_t>(values.size()) != n)
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_str(t.d_->shape));
    t.d_->values = std::move(values);
  }
  t.d_->requires_grad = requires_grad;
  if (requires_grad) t.d_->grad.assign(t.d_->values.size(), 0.0);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (!is_scalar()) throw ContractError("item() on non-scalar tensor");
  return d_->values[0];
}

std::vector<double>& Tensor::grad() {
  if (d_->grad.empty()) throw ContractError("gradient not allocated (requires_grad is false)");
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (d_->grad.empty()) throw ContractError("gradient not allocated (requires_grad is false)");
  return d_->grad;
}

void Tensor::zero_grad() const {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.d_ = std::make_shared<TensorData>(*d_);
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) throw ContractError("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;
  loss.raw()->grad[0] += 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

namespace {

Tensor make_output(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

  Tensor out = make_output({m, n}, a.requires_grad() || b.requires_grad());
  {
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        for (int j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
      }
  }
  if (out.requires_grad()) {
    auto ad = a.raw();
    auto bd = b.raw();
    auto od = out.raw();
    tape.record([ad, bd, od, m, k, n] {
      const double* go = od->grad.data();
      if (ad->requires_grad) {
        double* ga = ad->grad.data();
        const double* bv = bd->values.data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += go[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (bd->requires_grad) {
        double* gb = bd->grad.data();
        const double* av = ad->values.data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (int j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor matvec(Tape& tape, const Tensor& w, const Tensor& x) {
  check_matrix(w, "matvec");
  check_vector(x, "matvec");
  const int m = w.shape()[0], k = w.shape()[1];
  if (k != x.shape()[0])
    throw ShapeError("matvec: " + shape_str(w.shape()) + " vs " + shape_str(x.shape()));

  Tensor out = make_output({m}, w.requires_grad() || x.requires_grad());
  {
    const double* wv = w.values().data();
    const double* xv = x.values().data();
    double* ov = out.values().data();
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = wv + static_cast<size_t>(i) * k;
      for (int j = 0; j < k; ++j) acc += row[j] * xv[j];
      ov[i] = acc;
    }
  }
  if (out.requires_grad()) {
    auto wd = w.raw();
    auto xd = x.raw();
    auto od = out.raw();
    tape.record([wd, xd, od, m, k] {
      const double* go = od->grad.data();
      if (wd->requires_grad) {
        double* gw = wd->grad.data();
        const double* xv = xd->values.data();
        for (int i = 0; i < m; ++i) {
          const double gi = go[i];
          double* row = gw + static_cast<size_t>(i) * k;
          for (int j = 0; j < k; ++j) row[j] += gi * xv[j];
        }
      }
      if (xd->requires_grad) {
        double* gx = xd->grad.data();
        const double* wv = wd->values.data();
        for (int i = 0; i < m; ++i) {
          const double gi = go[i];
          const double* row = wv + static_cast<size_t>(i) * k;
          for (int j = 0; j < k; ++j) gx[j] += gi * row[j];
        }
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (out.requires_grad()) {
    auto ad = a.raw();
    auto bd = b.raw();
    auto od = out.raw();
    tape.record([ad, bd, od, n] {
      const double* go = od->grad.data();
      if (ad->requires_grad)
        for (size_t i = 0; i < n; ++i) ad->grad[i] += go[i];
      if (bd->requires_grad)
        for (size_t i = 0; i < n; ++i) bd->grad[i] += go[i];
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  const size_t n = x.values().size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  if (out.requires_grad()) {
    auto xd = x.raw();
    auto od = out.raw();
    tape.record([xd, od, n] {
      for (size_t i = 0; i < n; ++i)
        if (xd->values[i] > 0.0) xd->grad[i] += od->grad[i];
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  const size_t n = x.values().size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = c * x.values()[i];
  if (out.requires_grad()) {
    auto xd = x.raw();
    auto od = out.raw();
    tape.record([xd, od, n, c] {
      for (size_t i = 0; i < n; ++i) xd->grad[i] += c * od->grad[i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out = make_output({1}, x.requires_grad());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  if (out.requires_grad()) {
    auto xd = x.raw();
    auto od = out.raw();
    tape.record([xd, od] {
      const double g = od->grad[0];
      for (double& gi : xd->grad) gi += g;
    });
  }
  return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat: empty input");
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    check_vector(p, "concat");
    total += p.shape()[0];
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output({total}, rg);
  size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + off);
    off += p.values().size();
  }
  if (out.requires_grad()) {
    std::vector<TensorData*> pds;
    pds.reserve(parts.size());
    for (const Tensor& p : parts) pds.push_back(p.raw());
    auto od = out.raw();
    tape.record([pds = std::move(pds), od] {
      size_t o = 0;
      for (TensorData* pd : pds) {
        const size_t n = pd->values.size();
        if (pd->requires_grad)
          for (size_t i = 0; i < n; ++i) pd->grad[i] += od->grad[o + i];
        o += n;
      }
    });
  }
  return out;
}

Tensor embedding_mean(Tape& tape, const Tensor& table, std::span<const int> columns) {
  check_matrix(table, "embedding_mean");
  if (columns.empty()) throw ContractError("embedding_mean: no active columns");
  const int rows = table.shape()[0], cols = table.shape()[1];
  for (int c : columns)
    if (c < 0 || c >= cols) throw IndexError("embedding_mean: column " + std::to_string(c));

  Tensor out = make_output({rows}, table.requires_grad());
  const double inv = 1.0 / static_cast<double>(columns.size());
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int c : columns) acc += table.values()[static_cast<size_t>(i) * cols + c];
    out.values()[i] = acc * inv;
  }
  if (out.requires_grad()) {
    auto td = table.raw();
    auto od = out.raw();
    std::vector<int> idx(columns.begin(), columns.end());
    tape.record([td, od, idx = std::move(idx), rows, cols, inv] {
      for (int i = 0; i < rows; ++i) {
        const double g = od->grad[i] * inv;
        for (int c : idx) td->grad[static_cast<size_t>(i) * cols + c] += g;
      }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, int target) {
  check_vector(logits, "softmax_cross_entropy");
  const int n = logits.shape()[0];
  if (target < 0 || target >= n)
    throw IndexError("softmax_cross_entropy: target " + std::to_string(target) + " out of range " +
                     std::to_string(n));

  std::vector<double> probs = softmax(logits.values());
  const double* lv = logits.values().data();
  double mx = lv[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, lv[i]);
  double lse = 0.0;
  for (int i = 0; i < n; ++i) lse += std::exp(lv[i] - mx);
  const double loss = std::log(lse) + mx - lv[target];

  Tensor out = make_output({1}, logits.requires_grad());
  out.values()[0] = loss;
  if (out.requires_grad()) {
    auto ld = logits.raw();
    auto od = out.raw();
    tape.record([ld, od, probs = std::move(probs), target, n] {
      const double g = od->grad[0];
      for (int i = 0; i < n; ++i) ld->grad[i] += g * (probs[i] - (i == target ? 1.0 : 0.0));
    });
  }
  return out;
}

Tensor add_scaled(Tape& tape, const Tensor& a, double ca, const Tensor& b, double cb) {
  if (a.shape() != b.shape())
    throw ShapeError("add_scaled: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = ca * a.values()[i] + cb * b.values()[i];
  if (out.requires_grad()) {
    auto ad = a.raw();
    auto bd = b.raw();
    auto od = out.raw();
    tape.record([ad, bd, od, n, ca, cb] {
      const double* go = od->grad.data();
      if (ad->requires_grad)
        for (size_t i = 0; i < n; ++i) ad->grad[i] += ca * go[i];
      if (bd->requires_grad)
        for (size_t i = 0; i < n; ++i) bd->grad[i] += cb * go[i];
    });
  }
  return out;
}

Tensor mean_of(Tape& tape, std::span<const Tensor> scalars) {
  if (scalars.empty()) throw ContractError("mean_of: empty input");
  bool rg = false;
  double acc = 0.0;
  for (const Tensor& s : scalars) {
    if (!s.is_scalar()) throw ContractError("mean_of: inputs must be scalars");
    acc += s.values()[0];
    rg = rg || s.requires_grad();
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  Tensor out = make_output({1}, rg);
  out.values()[0] = acc * inv;
  if (out.requires_grad()) {
    std::vector<TensorData*> sds;
    sds.reserve(scalars.size());
    for (const Tensor& s : scalars) sds.push_back(s.raw());
    auto od = out.raw();
    tape.record([sds = std::move(sds), od, inv] {
      const double g = od->grad[0] * inv;
      for (TensorData* sd : sds)
        if (sd->requires_grad) sd->grad[0] += g;
    });
  }
  return out;
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), x.values(), false);
}

Tensor affine(Tape& tape, const DenseLayer& layer, const Tensor& x) {
  return add(tape, matvec(tape, layer.w, x), layer.b);
}

Tensor affine_relu_stack(Tape& tape, const Tensor& x, std::span<const DenseLayer> layers,
                         bool final_linear) {
  if (layers.empty()) throw ContractError("affine_relu_stack: no layers");
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = affine(tape, layers[i], h);
    const bool last = i + 1 == layers.size();
    if (!last || !final_linear) h = relu(tape, h);
  }
  return h;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

bool all_finite(std::span<const double> xs) {
  for (double v : xs)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace clover
