#include "lsed/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "lsed/errors.hpp"

namespace lsed::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape;
  for (Var v : vars) {
    if (v.tape == nullptr || v.tape != t) throw InvalidArgument("operands belong to different tapes");
  }
  return *t;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

/// Gathers dilated taps into rows: cols[(n,t), j*c_in + i] = x[n, t + (j-h)d, i].
void im2col(std::span<const double> x, std::size_t batch, std::size_t time, std::size_t c_in,
            std::size_t kernel, std::size_t dilation, std::vector<double>& cols) {
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t width = kernel * c_in;
  cols.assign(batch * time * width, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < time; ++t) {
      double* row = cols.data() + (n * time + t) * width;
      for (std::size_t j = 0; j < kernel; ++j) {
        const auto src = static_cast<std::ptrdiff_t>(t) +
                         (static_cast<std::ptrdiff_t>(j) - half) * static_cast<std::ptrdiff_t>(dilation);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(time)) continue;
        const double* in = x.data() + (n * time + static_cast<std::size_t>(src)) * c_in;
        std::copy(in, in + c_in, row + j * c_in);
      }
    }
  }
}

void col2im_add(std::span<const double> cols, std::size_t batch, std::size_t time, std::size_t c_in,
                std::size_t kernel, std::size_t dilation, std::vector<double>& gx) {
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t width = kernel * c_in;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < time; ++t) {
      const double* row = cols.data() + (n * time + t) * width;
      for (std::size_t j = 0; j < kernel; ++j) {
        const auto src = static_cast<std::ptrdiff_t>(t) +
                         (static_cast<std::ptrdiff_t>(j) - half) * static_cast<std::ptrdiff_t>(dilation);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(time)) continue;
        double* out = gx.data() + (n * time + static_cast<std::size_t>(src)) * c_in;
        const double* g = row + j * c_in;
        for (std::size_t i = 0; i < c_in; ++i) out[i] += g[i];
      }
    }
  }
}

// Column sums of a row-major [rows, cols] block added into `out`. Eigen's
// vectorised colwise().sum() peels by pointer alignment, which makes the
// rounding depend on where the allocator placed the buffer.
void add_row_sums(const double* m, std::size_t rows, std::size_t cols, std::vector<double>& out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
  }
}

}  // namespace

Var conv1d(Var x, Var w, Var b, int dilation) {
  Tape& tape = same_tape({x, w, b});
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 3, "conv1d: input must be [batch, time, channels], got " + to_string(xs));
  require(ws.size() == 3, "conv1d: weight must be [kernel, c_in, c_out], got " + to_string(ws));
  require(ws[0] % 2 == 1, "conv1d: kernel size must be odd, got " + std::to_string(ws[0]));
  require(ws[1] == xs[2], "conv1d: input has " + std::to_string(xs[2]) + " channels, weight expects " +
                              std::to_string(ws[1]));
  require(b.shape() == Shape{ws[2]}, "conv1d: bias must be [" + std::to_string(ws[2]) + "]");
  require(dilation >= 1, "conv1d: dilation must be >= 1");

  const std::size_t batch = xs[0], time = xs[1], c_in = xs[2], kernel = ws[0], c_out = ws[2];
  const auto d = static_cast<std::size_t>(dilation);
  const std::size_t rows = batch * time;
  const std::size_t width = kernel * c_in;

  std::vector<double> cols;
  if (kernel > 1) im2col(x.value(), batch, time, c_in, kernel, d, cols);
  const double* cols_ptr = kernel > 1 ? cols.data() : x.value().data();

  std::vector<double> y(rows * c_out);
  MapMat ym(y.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c_out));
  CMapMat colm(cols_ptr, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
  CMapMat wm(w.value().data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(c_out));
  ym.noalias() = colm * wm;
  ym.rowwise() += CMapVec(b.value().data(), static_cast<Eigen::Index>(c_out)).transpose();

  const bool keep_cols = tape.recording() && kernel > 1 && tape.needs_grad(w);
  auto saved = keep_cols ? std::move(cols) : std::vector<double>{};
  return tape.push(
      {batch, time, c_out}, std::move(y), {x, w, b},
      [xi = x.id, wi = w.id, bi = b.id, batch, time, c_in, kernel, c_out, d, rows, width,
       saved = std::move(saved)](Tape& t, std::size_t self) {
        const auto& gy_vec = t.node_grad(self);
        CMapMat gy(gy_vec.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c_out));
        if (t.node_needs_grad(bi)) {
          add_row_sums(gy_vec.data(), rows, c_out, t.grad_buffer(bi));
        }
        if (t.node_needs_grad(wi)) {
          const double* cp = kernel > 1 ? saved.data() : t.node_value(xi).data();
          CMapMat colm(cp, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
          auto& gw = t.grad_buffer(wi);
          MapMat(gw.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(c_out)).noalias() +=
              colm.transpose() * gy;
        }
        if (t.node_needs_grad(xi)) {
          CMapMat wm(t.node_value(wi).data(), static_cast<Eigen::Index>(width),
                     static_cast<Eigen::Index>(c_out));
          auto& gx = t.grad_buffer(xi);
          if (kernel == 1) {
            MapMat(gx.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c_in)).noalias() +=
                gy * wm.transpose();
          } else {
            std::vector<double> gcols(rows * width);
            MapMat(gcols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width)).noalias() =
                gy * wm.transpose();
            col2im_add(gcols, batch, time, c_in, kernel, d, gx);
          }
        }
      });
}

Var affine(Var x, Var w, Var b) {
  Tape& tape = same_tape({x, w, b});
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(xs.size() == 2, "affine: input must be [batch, features], got " + to_string(xs));
  require(ws.size() == 2 && ws[0] == xs[1],
          "affine: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
  require(b.shape() == Shape{ws[1]}, "affine: bias must be [" + std::to_string(ws[1]) + "]");
  const auto n = static_cast<Eigen::Index>(xs[0]);
  const auto f = static_cast<Eigen::Index>(xs[1]);
  const auto o = static_cast<Eigen::Index>(ws[1]);

  std::vector<double> y(static_cast<std::size_t>(n * o));
  MapMat ym(y.data(), n, o);
  ym.noalias() = CMapMat(x.value().data(), n, f) * CMapMat(w.value().data(), f, o);
  ym.rowwise() += CMapVec(b.value().data(), o).transpose();

  return tape.push({xs[0], ws[1]}, std::move(y), {x, w, b},
                   [xi = x.id, wi = w.id, bi = b.id, n, f, o](Tape& t, std::size_t self) {
                     CMapMat gy(t.node_grad(self).data(), n, o);
                     if (t.node_needs_grad(bi)) {
                       add_row_sums(t.node_grad(self).data(), static_cast<std::size_t>(n), static_cast<std::size_t>(o),
                                    t.grad_buffer(bi));
                     }
                     if (t.node_needs_grad(wi)) {
                       MapMat(t.grad_buffer(wi).data(), f, o).noalias() +=
                           CMapMat(t.node_value(xi).data(), n, f).transpose() * gy;
                     }
                     if (t.node_needs_grad(xi)) {
                       MapMat(t.grad_buffer(xi).data(), n, f).noalias() +=
                           gy * CMapMat(t.node_value(wi).data(), f, o).transpose();
                     }
                   });
}

Var relu(Var x) {
  Tape& tape = *x.tape;
  const auto in = x.value();
  std::vector<double> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] < 0.0 ? 0.0 : in[i];  // NaN propagates
  if (tape.tracks_kinks()) {
    std::vector<std::uint8_t> bits(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) bits[i] = in[i] > 0.0 ? 1 : 0;
    tape.append_kinks(bits);
  }
  return tape.push(x.shape(), std::move(y), {x}, [xi = x.id](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    const auto& v = t.node_value(xi);
    auto& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (v[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  Tape& tape = *x.tape;
  const auto in = x.value();
  std::vector<double> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    if (v >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  return tape.push(x.shape(), std::move(y), {x}, [xi = x.id](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    const auto& s = t.node_value(self);
    auto& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(), "add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                                      " differ");
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return tape.push(a.shape(), std::move(y), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    for (std::size_t id : {ai, bi}) {
      if (!t.node_needs_grad(id)) continue;
      auto& gx = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(), "mul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                                      " differ");
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return tape.push(a.shape(), std::move(y), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    if (t.node_needs_grad(ai)) {
      const auto& other = t.node_value(bi);
      auto& ga = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * other[i];
    }
    if (t.node_needs_grad(bi)) {
      const auto& other = t.node_value(ai);
      auto& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * other[i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  const auto v = x.value();
  return x.tape->push(std::move(shape), std::vector<double>(v.begin(), v.end()), {x},
                      [xi = x.id](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        auto& gx = t.grad_buffer(xi);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  require(!parts.empty(), "concat: no operands");
  Tape& tape = *parts.front().tape;
  const Shape first = parts.front().shape();
  require(axis < first.size(), "concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (Var p : parts) {
    require(p.tape == &tape, "concat: operands belong to different tapes");
    const Shape& s = p.shape();
    require(s.size() == first.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      require(i == axis || s[i] == first[i],
              "concat: shapes " + to_string(first) + " and " + to_string(s) + " differ off the concat axis");
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> y(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].value();
    const std::size_t block = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * block, block, y.data() + o * total * inner + offset * inner);
    }
    offset += extents[k];
  }
  std::vector<std::size_t> ids;
  for (Var p : parts) ids.push_back(p.id);
  return tape.push(std::move(out_shape), std::move(y), parts,
                   [ids, extents, outer, inner, total](Tape& t, std::size_t self) {
                     const auto& g = t.node_grad(self);
                     std::size_t off = 0;
                     for (std::size_t k = 0; k < ids.size(); ++k) {
                       const std::size_t block = extents[k] * inner;
                       if (t.node_needs_grad(ids[k])) {
                         auto& gx = t.grad_buffer(ids[k]);
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = g.data() + o * total * inner + off * inner;
                           double* dst = gx.data() + o * block;
                           for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                         }
                       }
                       off += extents[k];
                     }
                   });
}

Var mean(Var x, std::size_t axis) {
  const Shape& s = x.shape();
  require(axis < s.size(), "mean: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  const auto v = x.value();
  std::vector<double> y(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < extent; ++a) {
      const double* src = v.data() + (o * extent + a) * inner;
      double* dst = y.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const double scale = 1.0 / static_cast<double>(extent);
  for (double& e : y) e *= scale;

  return x.tape->push(std::move(out_shape), std::move(y), {x},
                      [xi = x.id, outer, inner, extent, scale](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        auto& gx = t.grad_buffer(xi);
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t a = 0; a < extent; ++a) {
                            double* dst = gx.data() + (o * extent + a) * inner;
                            const double* src = g.data() + o * inner;
                            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
                          }
                        }
                      });
}

Var sum(Var x) {
  const auto v = x.value();
  double acc = 0.0;
  for (double e : v) acc += e;
  return x.tape->push({1}, {acc}, {x}, [xi = x.id](Tape& t, std::size_t self) {
    const double g = t.node_grad(self)[0];
    for (double& e : t.grad_buffer(xi)) e += g;
  });
}

Var bce(Var p, Var target) {
  Tape& tape = same_tape({p, target});
  require(p.shape() == target.shape(),
          "bce: prediction " + to_string(p.shape()) + " and target " + to_string(target.shape()) + " differ");
  const auto pv = p.value();
  const auto yv = target.value();
  const std::size_t n = pv.size();
  double loss = 0.0;
  std::vector<std::uint8_t> clamp(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double q = pv[i];
    if (q < kBceClamp) {
      q = kBceClamp;
      clamp[i] = 1;
    } else if (q > 1.0 - kBceClamp) {
      q = 1.0 - kBceClamp;
      clamp[i] = 2;
    }
    loss -= yv[i] * std::log(q) + (1.0 - yv[i]) * std::log(1.0 - q);
  }
  loss /= static_cast<double>(n);
  tape.append_kinks(clamp);
  return tape.push({1}, {loss}, {p, target},
                   [pi = p.id, ti = target.id, n, clamp = std::move(clamp)](Tape& t, std::size_t self) {
                     const double g = t.node_grad(self)[0] / static_cast<double>(n);
                     const auto& pv = t.node_value(pi);
                     const auto& yv = t.node_value(ti);
                     if (t.node_needs_grad(pi)) {
                       auto& gp = t.grad_buffer(pi);
                       for (std::size_t i = 0; i < n; ++i) {
                         if (clamp[i] != 0) continue;
                         gp[i] += g * (-yv[i] / pv[i] + (1.0 - yv[i]) / (1.0 - pv[i]));
                       }
                     }
                     if (t.node_needs_grad(ti)) {
                       auto& gt = t.grad_buffer(ti);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double q = std::clamp(pv[i], kBceClamp, 1.0 - kBceClamp);
                         gt[i] += g * (std::log(1.0 - q) - std::log(q));
                       }
                     }
                   });
}

}  // namespace lsed::ad
