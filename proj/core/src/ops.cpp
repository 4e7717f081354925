// SPDX-License-Identifier: Apache-2.0
#include "gfolds/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "gfolds/errors.hpp"

namespace gfolds::ops {

namespace {

template <class T>
using NodeT = TensorNode<T>;

std::string shapes_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
         shape_to_string(b);
}

// C[n,m] += A[n,k] * B[k,m]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    T* c0 = c + i * m;
    T* c1 = c0 + m;
    T* c2 = c1 + m;
    T* c3 = c2 + m;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p];
      const T v1 = a0[k + p];
      const T v2 = a0[2 * k + p];
      const T v3 = a0[3 * k + p];
      const T* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        const T bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < n; ++i) {
    T* crow = c + i * m;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// dA[n,k] += dC[n,m] * B[k,m]^T
template <class T>
void gemm_nt(const T* dc, const T* b, T* da, std::size_t n, std::size_t k, std::size_t m) {
  std::vector<T> bt(k * m);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < m; ++j) {
      bt[j * k + p] = b[p * m + j];
    }
  }
  gemm_nn(dc, bt.data(), da, n, m, k);
}

// dB[k,m] += A[n,k]^T * dC[n,m]
template <class T>
void gemm_tn(const T* a, const T* dc, T* db, std::size_t n, std::size_t k, std::size_t m) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const T* a0 = a + i * k;
    const T* d0 = dc + i * m;
    const T* d1 = d0 + m;
    const T* d2 = d1 + m;
    const T* d3 = d2 + m;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p];
      const T v1 = a0[k + p];
      const T v2 = a0[2 * k + p];
      const T v3 = a0[3 * k + p];
      T* brow = db + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        brow[j] += v0 * d0[j] + v1 * d1[j] + v2 * d2[j] + v3 * d3[j];
      }
    }
  }
  for (; i < n; ++i) {
    const T* arow = a + i * k;
    const T* drow = dc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* brow = db + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        brow[j] += av * drow[j];
      }
    }
  }
}

}  // namespace

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto ad = a.data();
  const auto bd = b.data();
  if (a.shape() == b.shape()) {
    std::vector<T> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = ad[i] + bd[i];
    }
    return make_result<T>("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                          [](NodeT<T>& self) {
                            for (auto& p : self.parents) {
                              if (!p->requires_grad) {
                                continue;
                              }
                              p->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                p->grad[i] += self.grad[i];
                              }
                            }
                          });
  }
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    const std::size_t d = b.dim(0);
    std::vector<T> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = ad[i] + bd[i % d];
    }
    return make_result<T>("add_bias", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                          [d](NodeT<T>& self) {
                            auto& pa = *self.parents[0];
                            auto& pb = *self.parents[1];
                            if (pa.requires_grad) {
                              pa.ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pa.grad[i] += self.grad[i];
                              }
                            }
                            if (pb.requires_grad) {
                              pb.ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                pb.grad[i % d] += self.grad[i];
                              }
                            }
                          });
  }
  throw DimensionError(shapes_msg("add", a.shape(), b.shape()));
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(shapes_msg("sub", a.shape(), b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] - bd[i];
  }
  return make_result<T>("sub", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              pa.grad[i] += self.grad[i];
                            }
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              pb.grad[i] -= self.grad[i];
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(shapes_msg("mul", a.shape(), b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * bd[i];
  }
  return make_result<T>("mul", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                        [](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          // Copies guard against pa and pb being the same node.
                          const std::vector<T> av = pa.data;
                          const std::vector<T> bv = pb.data;
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              pa.grad[i] += self.grad[i] * bv[i];
                            }
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              pb.grad[i] += self.grad[i] * av[i];
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * factor;
  }
  return make_result<T>("scale", a.shape(), std::move(out), {a.node_ptr()},
                        [factor](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            pa.grad[i] += self.grad[i] * factor;
                          }
                        });
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const bool a_ok = a.rank() == 2 || a.rank() == 3;
  const bool b_ok = b.rank() == 2 || b.rank() == 3;
  if (!a_ok || !b_ok) {
    throw DimensionError(shapes_msg("matmul", a.shape(), b.shape()));
  }
  const std::size_t batch_a = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t batch_b = b.rank() == 3 ? b.dim(0) : 1;
  const std::size_t n = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2);
  const std::size_t m = b.dim(b.rank() - 1);
  const bool batch_match = a.rank() == 2 || b.rank() == 2 || batch_a == batch_b;
  if (k != kb || !batch_match) {
    throw DimensionError(shapes_msg("matmul", a.shape(), b.shape()));
  }
  const std::size_t batch = std::max(batch_a, batch_b);
  const bool batched = a.rank() == 3 || b.rank() == 3;
  Shape out_shape = batched ? Shape{batch, n, m} : Shape{n, m};
  std::vector<T> out(batch * n * m, T{0});
  const std::size_t a_stride = a.rank() == 3 ? n * k : 0;
  const std::size_t b_stride = b.rank() == 3 ? k * m : 0;
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_nn(ad + t * a_stride, bd + t * b_stride, out.data() + t * n * m, n, k, m);
  }
  return make_result<T>(
      "matmul", std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()},
      [=](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* dc = self.grad.data();
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t t = 0; t < batch; ++t) {
            gemm_nt(dc + t * n * m, pb.data.data() + t * b_stride, pa.grad.data() + t * a_stride,
                    n, k, m);
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t t = 0; t < batch; ++t) {
            gemm_tn(pa.data.data() + t * a_stride, dc + t * n * m, pb.grad.data() + t * b_stride,
                    n, k, m);
          }
        }
      });
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || bias.rank() != 1 ||
      x.shape().back() != weight.dim(0) || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("linear: incompatible shapes x=" + shape_to_string(x.shape()) +
                         " weight=" + shape_to_string(weight.shape()) +
                         " bias=" + shape_to_string(bias.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t outd = weight.dim(1);
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  std::vector<T> out(rows * outd);
  const T* bd = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(bd, bd + outd, out.begin() + static_cast<std::ptrdiff_t>(r * outd));
  }
  gemm_nn(x.data().data(), weight.data().data(), out.data(), rows, in, outd);
  return make_result<T>(
      "linear", std::move(out_shape), std::move(out),
      {x.node_ptr(), weight.node_ptr(), bias.node_ptr()}, [=](NodeT<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pbias = *self.parents[2];
        const T* dy = self.grad.data();
        if (px.requires_grad) {
          px.ensure_grad();
          gemm_nt(dy, pw.data.data(), px.grad.data(), rows, in, outd);
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          gemm_tn(px.data.data(), dy, pw.grad.data(), rows, in, outd);
        }
        if (pbias.requires_grad) {
          pbias.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < outd; ++j) {
              pbias.grad[j] += dy[r * outd + j];
            }
          }
        }
      });
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  if (a.rank() < 2) {
    throw DimensionError("transpose: needs rank >= 2, got " + shape_to_string(a.shape()));
  }
  const std::size_t n = a.dim(a.rank() - 2);
  const std::size_t m = a.dim(a.rank() - 1);
  const std::size_t batch = a.numel() / (n * m);
  Shape out_shape = a.shape();
  std::swap(out_shape[a.rank() - 2], out_shape[a.rank() - 1]);
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        out[t * n * m + j * n + i] = ad[t * n * m + i * m + j];
      }
    }
  }
  return make_result<T>("transpose", std::move(out_shape), std::move(out), {a.node_ptr()},
                        [=](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t t = 0; t < batch; ++t) {
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = 0; j < m; ++j) {
                                pa.grad[t * n * m + i * m + j] += self.grad[t * n * m + j * n + i];
                              }
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError(shapes_msg("reshape", a.shape(), shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {a.node_ptr()},
                        [](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            pa.grad[i] += self.grad[i];
                          }
                        });
}

template <class T>
BasicTensor<T> slice_last(const BasicTensor<T>& a, std::size_t start, std::size_t len) {
  if (a.rank() < 1 || start + len > a.shape().back()) {
    throw DimensionError("slice_last: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of range for shape " +
                         shape_to_string(a.shape()));
  }
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.numel() / width;
  Shape out_shape = a.shape();
  out_shape.back() = len;
  const auto ad = a.data();
  std::vector<T> out(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < len; ++j) {
      out[r * len + j] = ad[r * width + start + j];
    }
  }
  return make_result<T>("slice_last", std::move(out_shape), std::move(out), {a.node_ptr()},
                        [=](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < len; ++j) {
                              pa.grad[r * width + start + j] += self.grad[r * len + j];
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> concat_last(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) {
    throw DimensionError("concat_last: no inputs");
  }
  Shape lead = parts.front().shape();
  lead.pop_back();
  std::size_t width = 0;
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<NodeT<T>>> parents;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    const std::size_t w = pl.back();
    pl.pop_back();
    if (pl != lead) {
      throw DimensionError(shapes_msg("concat_last", parts.front().shape(), p.shape()));
    }
    widths.push_back(w);
    width += w;
    parents.push_back(p.node_ptr());
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<T> out(rows * width);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < widths[k]; ++j) {
        out[r * width + offset + j] = pd[r * widths[k] + j];
      }
    }
    offset += widths[k];
  }
  Shape out_shape = lead;
  out_shape.push_back(width);
  return make_result<T>("concat_last", std::move(out_shape), std::move(out), std::move(parents),
                        [=](NodeT<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            auto& p = *self.parents[k];
                            if (p.requires_grad) {
                              p.ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t j = 0; j < widths[k]; ++j) {
                                  p.grad[r * widths[k] + j] += self.grad[r * width + off + j];
                                }
                              }
                            }
                            off += widths[k];
                          }
                        });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(0.5) * ad[i] * (T(1) + std::erf(ad[i] * inv_sqrt2));
  }
  return make_result<T>("gelu", a.shape(), std::move(out), {a.node_ptr()},
                        [inv_sqrt2](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          pa.ensure_grad();
                          const T inv_sqrt2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const T x = pa.data[i];
                            const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
                            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
                            pa.grad[i] += self.grad[i] * (cdf + x * pdf);
                          }
                        });
}

template <class T>
BasicTensor<T> softmax_last(const BasicTensor<T>& a, std::span<const T> key_bias) {
  if (a.rank() < 1) {
    throw DimensionError("softmax_last: scalar input");
  }
  const std::size_t m = a.shape().back();
  const std::size_t rows = a.numel() / m;
  std::size_t groups = 1;
  if (!key_bias.empty()) {
    if (key_bias.size() % m != 0 || rows % (key_bias.size() / m) != 0) {
      throw DimensionError("softmax_last: key bias of length " + std::to_string(key_bias.size()) +
                           " does not tile shape " + shape_to_string(a.shape()));
    }
    groups = key_bias.size() / m;
  }
  const std::size_t rows_per_group = rows / groups;
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = ad.data() + r * m;
    T* y = out.data() + r * m;
    const T* bias = key_bias.empty() ? nullptr : key_bias.data() + (r / rows_per_group) * m;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const T v = bias != nullptr ? x[j] + bias[j] : x[j];
      y[j] = v;
      mx = std::max(mx, v);
    }
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(y, y + m, T{0});
      continue;
    }
    T total{0};
    for (std::size_t j = 0; j < m; ++j) {
      y[j] = std::exp(y[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      y[j] /= total;
    }
  }
  return make_result<T>("softmax", a.shape(), out, {a.node_ptr()}, [m, rows, out](NodeT<T>& self) {
    auto& pa = *self.parents[0];
    pa.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = out.data() + r * m;
      const T* dy = self.grad.data() + r * m;
      T dot{0};
      for (std::size_t j = 0; j < m; ++j) {
        dot += dy[j] * y[j];
      }
      for (std::size_t j = 0; j < m; ++j) {
        pa.grad[r * m + j] += y[j] * (dy[j] - dot);
      }
    }
  });
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& bias, double eps) {
  if (!(eps > 0.0)) {
    throw ConfigError("layer_norm: eps must be positive, got " + std::to_string(eps));
  }
  if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.shape().back() ||
      bias.dim(0) != x.shape().back()) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()) + " do not match input " +
                         shape_to_string(x.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<T> out(xd.size());
  std::vector<T> xhat(xd.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mu += static_cast<double>(xr[j]);
    }
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = static_cast<double>(xr[j]) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = static_cast<T>(rs);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>((static_cast<double>(xr[j]) - mu) * rs);
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](NodeT<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad) {
          pg.ensure_grad();
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
        }
        if (px.requires_grad) {
          px.ensure_grad();
        }
        std::vector<T> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * d;
          const T* h = xhat.data() + r * d;
          T sum_dxhat{0};
          T sum_dxhat_h{0};
          for (std::size_t j = 0; j < d; ++j) {
            if (pg.requires_grad) {
              pg.grad[j] += dy[j] * h[j];
            }
            if (pb.requires_grad) {
              pb.grad[j] += dy[j];
            }
            dxhat[j] = dy[j] * pg.data[j];
            sum_dxhat += dxhat[j];
            sum_dxhat_h += dxhat[j] * h[j];
          }
          if (px.requires_grad) {
            const T scale_r = rstd[r] / static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              px.grad[r * d + j] +=
                  scale_r * (static_cast<T>(d) * dxhat[j] - sum_dxhat - h[j] * sum_dxhat_h);
            }
          }
        }
      });
}

template <class T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) {
    throw DimensionError("embedding: table must be rank 2, got " + shape_to_string(table.shape()));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  const auto td = table.data();
  std::vector<T> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(td.data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
  }
  Shape shape{idx.size(), d};
  return make_result<T>("embedding", std::move(shape), std::move(out), {table.node_ptr()},
                        [d, idx = std::move(idx)](NodeT<T>& self) {
                          auto& pt = *self.parents[0];
                          pt.ensure_grad();
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            T* g = pt.grad.data() + static_cast<std::size_t>(idx[r]) * d;
                            for (std::size_t j = 0; j < d; ++j) {
                              g[j] += self.grad[r * d + j];
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> scatter_add_rows(const BasicTensor<T>& x, std::span<const std::size_t> dst,
                                std::size_t n_out) {
  if (x.rank() != 2 || x.dim(0) != dst.size()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(dst.size()) +
                         " destinations for input " + shape_to_string(x.shape()));
  }
  for (std::size_t t : dst) {
    if (t >= n_out) {
      throw IndexError("scatter_add_rows: destination row " + std::to_string(t) + " >= " +
                       std::to_string(n_out));
    }
  }
  const std::size_t d = x.dim(1);
  std::vector<std::size_t> target(dst.begin(), dst.end());
  const auto xd = x.data();
  std::vector<T> out(n_out * d, T{0});
  for (std::size_t e = 0; e < target.size(); ++e) {
    for (std::size_t j = 0; j < d; ++j) {
      out[target[e] * d + j] += xd[e * d + j];
    }
  }
  return make_result<T>("scatter_add_rows", Shape{n_out, d}, std::move(out), {x.node_ptr()},
                        [d, target = std::move(target)](NodeT<T>& self) {
                          auto& px = *self.parents[0];
                          px.ensure_grad();
                          for (std::size_t e = 0; e < target.size(); ++e) {
                            for (std::size_t j = 0; j < d; ++j) {
                              px.grad[e * d + j] += self.grad[target[e] * d + j];
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> scale_rows(const BasicTensor<T>& x, std::span<const T> factors) {
  if (x.rank() < 1 || x.numel() != factors.size() * x.shape().back()) {
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) +
                         " factors for input " + shape_to_string(x.shape()));
  }
  const std::size_t d = x.shape().back();
  std::vector<T> f(factors.begin(), factors.end());
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t r = 0; r < f.size(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      out[r * d + j] = xd[r * d + j] * f[r];
    }
  }
  return make_result<T>("scale_rows", x.shape(), std::move(out), {x.node_ptr()},
                        [d, f = std::move(f)](NodeT<T>& self) {
                          auto& px = *self.parents[0];
                          px.ensure_grad();
                          for (std::size_t r = 0; r < f.size(); ++r) {
                            for (std::size_t j = 0; j < d; ++j) {
                              px.grad[r * d + j] += self.grad[r * d + j] * f[r];
                            }
                          }
                        });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T total{0};
  for (T v : a.data()) {
    total += v;
  }
  return make_result<T>("sum", Shape{}, {total}, {a.node_ptr()}, [](NodeT<T>& self) {
    auto& pa = *self.parents[0];
    pa.ensure_grad();
    for (auto& g : pa.grad) {
      g += self.grad[0];
    }
  });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.numel() == 0) {
    throw EmptyBatchError("mean: empty tensor");
  }
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::span<const std::uint8_t> ignore) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size() ||
      (!ignore.empty() && ignore.size() != targets.size())) {
    throw DimensionError("cross_entropy: logits " + shape_to_string(logits.shape()) + " with " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t v = logits.dim(1);
  std::vector<std::uint8_t> active(rows, 1);
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!ignore.empty() && ignore[r] != 0) {
      active[r] = 0;
      continue;
    }
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[r]) + " outside " +
                       std::to_string(v) + " classes");
    }
    ++count;
  }
  if (count == 0) {
    throw EmptyBatchError("cross_entropy: every position is ignored");
  }
  const auto ld = logits.data();
  std::vector<T> probs(rows * v, T{0});
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (active[r] == 0) {
      continue;
    }
    const T* x = ld.data() + r * v;
    const T mx = *std::max_element(x, x + v);
    T z{0};
    for (std::size_t j = 0; j < v; ++j) {
      probs[r * v + j] = std::exp(x[j] - mx);
      z += probs[r * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) {
      probs[r * v + j] /= z;
    }
    const auto t = static_cast<std::size_t>(targets[r]);
    total += static_cast<double>(std::log(z) + mx - x[t]);
  }
  const T loss = static_cast<T>(total / static_cast<double>(count));
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  return make_result<T>(
      "cross_entropy", Shape{}, {loss}, {logits.node_ptr()},
      [rows, v, count, probs = std::move(probs), active = std::move(active),
       tg = std::move(tg)](NodeT<T>& self) {
        auto& pl = *self.parents[0];
        pl.ensure_grad();
        const T g = self.grad[0] / static_cast<T>(count);
        for (std::size_t r = 0; r < rows; ++r) {
          if (active[r] == 0) {
            continue;
          }
          for (std::size_t j = 0; j < v; ++j) {
            pl.grad[r * v + j] += g * probs[r * v + j];
          }
          pl.grad[r * v + static_cast<std::size_t>(tg[r])] -= g;
        }
      });
}

template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) {
    return a;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(a.numel());
  for (auto& m : mask) {
    m = rng.bernoulli(rate) ? T{0} : keep_scale;
  }
  const auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[i] * mask[i];
  }
  return make_result<T>("dropout", a.shape(), std::move(out), {a.node_ptr()},
                        [mask = std::move(mask)](NodeT<T>& self) {
                          auto& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < mask.size(); ++i) {
                            pa.grad[i] += self.grad[i] * mask[i];
                          }
                        });
}

#define GFOLDS_INSTANTIATE_OPS(T)                                                              \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&);                                       \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                    \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                               \
  template BasicTensor<T> slice_last(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> concat_last(const std::vector<BasicTensor<T>>&);                     \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                         \
  template BasicTensor<T> softmax_last(const BasicTensor<T>&, std::span<const T>);             \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                     const BasicTensor<T>&, double);                           \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const std::int32_t>);     \
  template BasicTensor<T> scatter_add_rows(const BasicTensor<T>&, std::span<const std::size_t>, \
                                           std::size_t);                                       \
  template BasicTensor<T> scale_rows(const BasicTensor<T>&, std::span<const T>);               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                          \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                         \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const std::int32_t>,  \
                                        std::span<const std::uint8_t>);                        \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, Rng&);

GFOLDS_INSTANTIATE_OPS(float)
GFOLDS_INSTANTIATE_OPS(double)

#undef GFOLDS_INSTANTIATE_OPS

}  // namespace gfolds::ops
