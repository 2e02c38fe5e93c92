#include "somoformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace somoformer {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

bool grads_wanted(const Tensor& a) { return Tape::active() != nullptr && a.requires_grad(); }
bool grads_wanted(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

void accumulate(Tensor& t, const std::vector<double>& g) {
  auto& dst = t.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

// Broadcast plan for the batch (leading) axes of matmul.
struct BatchPlan {
  Shape dims;                          // broadcast batch shape
  std::size_t count = 1;               // product of dims
  std::vector<std::size_t> a_stride;   // per batch axis, in units of matrices
  std::vector<std::size_t> b_stride;
};

BatchPlan plan_batches(const Shape& a, const Shape& b) {
  const int ra = static_cast<int>(a.size()) - 2;
  const int rb = static_cast<int>(b.size()) - 2;
  const int r = std::max(ra, rb);
  BatchPlan plan;
  plan.dims.assign(static_cast<std::size_t>(r), 1);
  for (int i = 0; i < r; ++i) {
    const int da = (i - (r - ra) >= 0) ? a[static_cast<std::size_t>(i - (r - ra))] : 1;
    const int db = (i - (r - rb) >= 0) ? b[static_cast<std::size_t>(i - (r - rb))] : 1;
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("matmul: batch dimensions do not broadcast, " + shape_str(a) +
                                  " vs " + shape_str(b));
    }
    plan.dims[static_cast<std::size_t>(i)] = std::max(da, db);
    plan.count *= static_cast<std::size_t>(plan.dims[static_cast<std::size_t>(i)]);
  }
  // Row-major strides in matrix units; 0 where the operand is broadcast.
  plan.a_stride.assign(static_cast<std::size_t>(r), 0);
  plan.b_stride.assign(static_cast<std::size_t>(r), 0);
  std::size_t sa = 1, sb = 1;
  for (int i = r - 1; i >= 0; --i) {
    const int da = (i - (r - ra) >= 0) ? a[static_cast<std::size_t>(i - (r - ra))] : 1;
    const int db = (i - (r - rb) >= 0) ? b[static_cast<std::size_t>(i - (r - rb))] : 1;
    plan.a_stride[static_cast<std::size_t>(i)] = (da == 1) ? 0 : sa;
    plan.b_stride[static_cast<std::size_t>(i)] = (db == 1) ? 0 : sb;
    sa *= static_cast<std::size_t>(da);
    sb *= static_cast<std::size_t>(db);
  }
  return plan;
}

void batch_offsets(const BatchPlan& plan, std::size_t flat, std::size_t& off_a, std::size_t& off_b) {
  off_a = 0;
  off_b = 0;
  for (int i = static_cast<int>(plan.dims.size()) - 1; i >= 0; --i) {
    const auto d = static_cast<std::size_t>(plan.dims[static_cast<std::size_t>(i)]);
    const std::size_t idx = flat % d;
    flat /= d;
    off_a += idx * plan.a_stride[static_cast<std::size_t>(i)];
    off_b += idx * plan.b_stride[static_cast<std::size_t>(i)];
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const auto& da = a.data();
  const auto& db = b.data();
  auto& o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] + db[i];
  if (grads_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record(out, [ac, bc, oc]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) accumulate(ac, g);
      if (bc.requires_grad()) accumulate(bc, g);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const auto& da = a.data();
  const auto& db = b.data();
  auto& o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] - db[i];
  if (grads_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record(out, [ac, bc, oc]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) accumulate(ac, g);
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const auto& da = a.data();
  const auto& db = b.data();
  auto& o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] * db[i];
  if (grads_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record(out, [ac, bc, oc]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        const auto& vb = bc.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        const auto& va = ac.data();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  const auto& da = a.data();
  auto& o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] * s;
  if (grads_wanted(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(out, [ac, oc, s]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || x.shape().back() != bias.shape()[0]) {
    throw std::invalid_argument("add_bias: incompatible shapes " + shape_str(x.shape()) + " vs " +
                                shape_str(bias.shape()));
  }
  const auto d = static_cast<std::size_t>(bias.shape()[0]);
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  const auto& vx = x.data();
  const auto& vb = bias.data();
  auto& o = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) o[r * d + j] = vx[r * d + j] + vb[j];
  if (grads_wanted(x, bias)) {
    out.set_requires_grad(true);
    Tensor xc = x, bc = bias, oc = out;
    Tape::active()->record(out, [xc, bc, oc, rows, d]() mutable {
      const auto& g = oc.grad();
      if (xc.requires_grad()) accumulate(xc, g);
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const auto p = static_cast<std::size_t>(a.shape()[a.rank() - 2]);
  const auto q = static_cast<std::size_t>(a.shape()[a.rank() - 1]);
  const auto qb = static_cast<std::size_t>(b.shape()[b.rank() - 2]);
  const auto r = static_cast<std::size_t>(b.shape()[b.rank() - 1]);
  if (q != qb) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const BatchPlan plan = plan_batches(a.shape(), b.shape());
  Shape out_shape = plan.dims;
  out_shape.push_back(static_cast<int>(p));
  out_shape.push_back(static_cast<int>(r));
  Tensor out(out_shape);

  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.data().data();
  const std::size_t a_mat = p * q, b_mat = q * r, c_mat = p * r;
  for (std::size_t n = 0; n < plan.count; ++n) {
    std::size_t oa = 0, ob = 0;
    batch_offsets(plan, n, oa, ob);
    const double* Ab = A + oa * a_mat;
    const double* Bb = B + ob * b_mat;
    double* Cb = C + n * c_mat;
    for (std::size_t i = 0; i < p; ++i) {
      double* Ci = Cb + i * r;
      for (std::size_t k = 0; k < q; ++k) {
        const double aik = Ab[i * q + k];
        const double* Bk = Bb + k * r;
        for (std::size_t j = 0; j < r; ++j) Ci[j] += aik * Bk[j];
      }
    }
  }

  if (grads_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record(out, [ac, bc, oc, plan, p, q, r, a_mat, b_mat, c_mat]() mutable {
      const double* G = oc.grad().data();
      const double* A = ac.data().data();
      const double* B = bc.data().data();
      double* GA = ac.requires_grad() ? ac.grad().data() : nullptr;
      double* GB = bc.requires_grad() ? bc.grad().data() : nullptr;
      for (std::size_t n = 0; n < plan.count; ++n) {
        std::size_t oa = 0, ob = 0;
        batch_offsets(plan, n, oa, ob);
        const double* Gb = G + n * c_mat;
        const double* Ab = A + oa * a_mat;
        const double* Bb = B + ob * b_mat;
        if (GA != nullptr) {
          double* dA = GA + oa * a_mat;
          // dA[i,k] += sum_j G[i,j] * B[k,j]
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < q; ++k) {
              double acc = 0.0;
              const double* Gi = Gb + i * r;
              const double* Bk = Bb + k * r;
              for (std::size_t j = 0; j < r; ++j) acc += Gi[j] * Bk[j];
              dA[i * q + k] += acc;
            }
        }
        if (GB != nullptr) {
          double* dB = GB + ob * b_mat;
          // dB[k,j] += sum_i A[i,k] * G[i,j]
          for (std::size_t i = 0; i < p; ++i) {
            const double* Gi = Gb + i * r;
            for (std::size_t k = 0; k < q; ++k) {
              const double aik = Ab[i * q + k];
              double* dBk = dB + k * r;
              for (std::size_t j = 0; j < r; ++j) dBk[j] += aik * Gi[j];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
  const int rank = a.rank();
  if (axis0 < 0 || axis1 < 0 || axis0 >= rank || axis1 >= rank) {
    throw std::invalid_argument("transpose: axis out of range for shape " + shape_str(a.shape()));
  }
  if (axis0 == axis1) return reshape(a, a.shape());
  Shape out_shape = a.shape();
  std::swap(out_shape[static_cast<std::size_t>(axis0)], out_shape[static_cast<std::size_t>(axis1)]);
  Tensor out(out_shape);

  // Input strides with the two axes swapped give, for each output coordinate,
  // the matching source offset.
  std::vector<std::size_t> in_stride(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    in_stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(i + 1)] *
                                             static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i + 1)]);
  std::vector<std::size_t> mapped = in_stride;
  std::swap(mapped[static_cast<std::size_t>(axis0)], mapped[static_cast<std::size_t>(axis1)]);
  std::vector<std::size_t> out_stride(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    out_stride[static_cast<std::size_t>(i)] = out_stride[static_cast<std::size_t>(i + 1)] *
                                              static_cast<std::size_t>(out_shape[static_cast<std::size_t>(i + 1)]);
  const auto source_index = [rank, &out_stride, &mapped](std::size_t flat) {
    std::size_t src = 0;
    for (int i = 0; i < rank; ++i) {
      const std::size_t s = out_stride[static_cast<std::size_t>(i)];
      src += (flat / s) * mapped[static_cast<std::size_t>(i)];
      flat %= s;
    }
    return src;
  };

  const auto& va = a.data();
  auto& vo = out.data();
  for (std::size_t flat = 0; flat < va.size(); ++flat) vo[flat] = va[source_index(flat)];

  if (grads_wanted(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(out, [ac, oc, out_stride, mapped, rank]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t flat = 0; flat < g.size(); ++flat) {
        std::size_t src = 0, rem = flat;
        for (int i = 0; i < rank; ++i) {
          const std::size_t s = out_stride[static_cast<std::size_t>(i)];
          src += (rem / s) * mapped[static_cast<std::size_t>(i)];
          rem %= s;
        }
        ga[src] += g[flat];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: element count mismatch, " + shape_str(a.shape()) +
                                " -> " + shape_str(shape));
  }
  Tensor out(std::move(shape), a.data());
  if (grads_wanted(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(out, [ac, oc]() mutable { accumulate(ac, oc.grad()); });
  }
  return out;
}

Tensor slice_last(const Tensor& a, int offset, int length) {
  const int d = a.shape().back();
  if (offset < 0 || length <= 0 || offset + length > d) {
    throw std::invalid_argument("slice_last: range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + length) + ") invalid for axis of size " +
                                std::to_string(d));
  }
  Shape out_shape = a.shape();
  out_shape.back() = length;
  Tensor out(out_shape);
  const auto rows = a.numel() / static_cast<std::size_t>(d);
  const auto& va = a.data();
  auto& vo = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < length; ++j)
      vo[r * static_cast<std::size_t>(length) + static_cast<std::size_t>(j)] =
          va[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(offset + j)];
  if (grads_wanted(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(out, [ac, oc, rows, d, offset, length]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < length; ++j)
          ga[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(offset + j)] +=
              g[r * static_cast<std::size_t>(length) + static_cast<std::size_t>(j)];
    });
  }
  return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank()) {
    throw std::invalid_argument("concat_last: rank mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  for (int i = 0; i + 1 < a.rank(); ++i) {
    if (a.shape()[static_cast<std::size_t>(i)] != b.shape()[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("concat_last: leading axes differ, " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
    }
  }
  const auto da = static_cast<std::size_t>(a.shape().back());
  const auto db = static_cast<std::size_t>(b.shape().back());
  Shape out_shape = a.shape();
  out_shape.back() = static_cast<int>(da + db);
  Tensor out(out_shape);
  const std::size_t rows = a.numel() / da;
  const auto& va = a.data();
  const auto& vb = b.data();
  auto& vo = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < da; ++j) vo[r * (da + db) + j] = va[r * da + j];
    for (std::size_t j = 0; j < db; ++j) vo[r * (da + db) + da + j] = vb[r * db + j];
  }
  if (grads_wanted(a, b)) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record(out, [ac, bc, oc, rows, da, db]() mutable {
      const auto& g = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < da; ++j) ga[r * da + j] += g[r * (da + db) + j];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < db; ++j) gb[r * db + j] += g[r * (da + db) + da + j];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  const auto& va = a.data();
  auto& vo = out.data();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] > 0.0 ? va[i] : 0.0;
  if (grads_wanted(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(out, [ac, oc]() mutable {
      const auto& g = oc.grad();
      const auto& va = ac.data();
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (va[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& rows) {
  if (table.rank() != 2) {
    throw std::invalid_argument("gather_rows: table must be 2-D, got " + shape_str(table.shape()));
  }
  const int R = table.shape()[0];
  const auto d = static_cast<std::size_t>(table.shape()[1]);
  for (int r : rows) {
    if (r < 0 || r >= R) {
      throw std::out_of_range("gather_rows: row index " + std::to_string(r) +
                              " out of range for table with " + std::to_string(R) + " rows");
    }
  }
  Tensor out({static_cast<int>(rows.size()), static_cast<int>(d)});
  const auto& vt = table.data();
  auto& vo = out.data();
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto src = static_cast<std::size_t>(rows[n]) * d;
    for (std::size_t j = 0; j < d; ++j) vo[n * d + j] = vt[src + j];
  }
  if (grads_wanted(table)) {
    out.set_requires_grad(true);
    Tensor tc = table, oc = out;
    Tape::active()->record(out, [tc, oc, rows, d]() mutable {
      const auto& g = oc.grad();
      auto& gt = tc.grad();
      for (std::size_t n = 0; n < rows.size(); ++n) {
        const auto dst = static_cast<std::size_t>(rows[n]) * d;
        for (std::size_t j = 0; j < d; ++j) gt[dst + j] += g[n * d + j];
      }
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& scores, const std::vector<bool>& keep) {
  const auto K = static_cast<std::size_t>(scores.shape().back());
  if (keep.size() != K) {
    throw std::invalid_argument("masked_softmax: mask size " + std::to_string(keep.size()) +
                                " does not match key axis " + std::to_string(K));
  }
  bool any_kept = false;
  for (bool k : keep) any_kept = any_kept || k;
  if (!any_kept) throw std::runtime_error("masked_softmax: all key positions are masked out");

  const std::size_t rows = scores.numel() / K;
  Tensor out(scores.shape());
  const auto& vs = scores.data();
  auto& vo = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = vs.data() + r * K;
    double* p = vo.data() + r * K;
    // Max over kept keys only, so masked garbage cannot perturb stabilization.
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k)
      if (keep[k] && s[k] > m) m = s[k];
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = keep[k] ? std::exp(s[k] - m) : 0.0;
      z += p[k];
    }
    for (std::size_t k = 0; k < K; ++k) p[k] /= z;
  }

  if (grads_wanted(scores)) {
    out.set_requires_grad(true);
    Tensor sc = scores, oc = out;
    Tape::active()->record(out, [sc, oc, keep, rows, K]() mutable {
      const auto& g = oc.grad();
      const auto& p = oc.data();
      auto& gs = sc.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * K;
        const double* pr = p.data() + r * K;
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += gr[k] * pr[k];
        double* out_g = gs.data() + r * K;
        for (std::size_t k = 0; k < K; ++k)
          if (keep[k]) out_g[k] += pr[k] * (gr[k] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto d = static_cast<std::size_t>(x.shape().back());
  if (gain.rank() != 1 || bias.rank() != 1 || static_cast<std::size_t>(gain.shape()[0]) != d ||
      static_cast<std::size_t>(bias.shape()[0]) != d) {
    throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                                shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  std::vector<double> mean(rows), rstd(rows);
  const auto& vx = x.data();
  const auto& vg = gain.data();
  const auto& vb = bias.data();
  auto& vo = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = vx.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    double* yr = vo.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = vg[j] * ((xr[j] - mu) * rs) + vb[j];
  }

  if (grads_wanted(x, gain) || grads_wanted(bias)) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gain, bc = bias, oc = out;
    Tape::active()->record(out, [xc, gc, bc, oc, mean, rstd, rows, d]() mutable {
      const auto& g = oc.grad();
      const auto& vx = xc.data();
      const auto& vg = gc.data();
      double* gx = xc.requires_grad() ? xc.grad().data() : nullptr;
      double* gg = gc.requires_grad() ? gc.grad().data() : nullptr;
      double* gb = bc.requires_grad() ? bc.grad().data() : nullptr;
      std::vector<double> xhat(d), dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = vx.data() + r * d;
        const double* gr = g.data() + r * d;
        const double rs = rstd[r];
        for (std::size_t j = 0; j < d; ++j) {
          xhat[j] = (xr[j] - mean[r]) * rs;
          dxhat[j] = gr[j] * vg[j];
        }
        if (gg != nullptr)
          for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xhat[j];
        if (gb != nullptr)
          for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
        if (gx != nullptr) {
          double c1 = 0.0, c2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            c1 += dxhat[j];
            c2 += dxhat[j] * xhat[j];
          }
          c1 /= static_cast<double>(d);
          c2 /= static_cast<double>(d);
          double* gxr = gx + r * d;
          for (std::size_t j = 0; j < d; ++j) gxr[j] += rs * (dxhat[j] - c1 - xhat[j] * c2);
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (grads_wanted(a)) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Tape::active()->record(out, [ac, oc]() mutable {
      const double g = oc.grad()[0];
      auto& ga = ac.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

}  // namespace somoformer
