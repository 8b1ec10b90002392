#include "cavspin/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

#include "cavspin/errors.hpp"

namespace cavspin {
namespace {

// Kronrod abscissae on [0, 1]; odd indices are the embedded Gauss nodes.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944678135549645200, 0.417959183673469387755102040816327};

struct Segment {
  double lo;
  double hi;
  std::complex<double> value;
  double error;

  bool operator<(const Segment& other) const { return error < other.error; }
};

Segment gauss_kronrod15(const ComplexIntegrand& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);

  const std::complex<double> fc = f(center);
  std::complex<double> kronrod = fc * kWgk[7];
  std::complex<double> gauss = fc * kWg[3];

  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const std::complex<double> sum = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * sum;
    if (j % 2 == 1) gauss += kWg[j / 2] * sum;
  }

  kronrod *= half;
  gauss *= half;
  return {lo, hi, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace

QuadratureResult integrate_adaptive(const ComplexIntegrand& f, double lo, double hi,
                                    std::span<const double> breakpoints,
                                    const QuadratureOptions& options) {
  if (lo == hi) return {};
  if (hi < lo) {
    QuadratureResult flipped = integrate_adaptive(f, hi, lo, breakpoints, options);
    flipped.value = -flipped.value;
    return flipped;
  }

  std::vector<double> edges{lo};
  for (double b : breakpoints) {
    if (b > lo && b < hi) edges.push_back(b);
  }
  edges.push_back(hi);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::priority_queue<Segment> heap;
  std::complex<double> total{0.0, 0.0};
  double total_error = 0.0;
  int evaluations = 0;

  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    Segment s = gauss_kronrod15(f, edges[i], edges[i + 1]);
    evaluations += 15;
    total += s.value;
    total_error += s.error;
    heap.push(s);
  }

  auto tolerance = [&] { return std::max(options.abs_tol, options.rel_tol * std::abs(total)); };

  while (total_error > tolerance()) {
    if (static_cast<int>(heap.size()) >= options.max_subintervals) {
      throw QuadratureError("adaptive quadrature did not converge",
                            {{"value_re", total.real()},
                             {"value_im", total.imag()},
                             {"error_estimate", total_error},
                             {"subintervals", heap.size()}});
    }
    Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi)) {
      throw QuadratureError("adaptive quadrature hit floating-point resolution",
                            {{"lo", worst.lo}, {"hi", worst.hi}, {"error_estimate", total_error}});
    }
    Segment left = gauss_kronrod15(f, worst.lo, mid);
    Segment right = gauss_kronrod15(f, mid, worst.hi);
    evaluations += 30;

    total += left.value + right.value - worst.value;
    total_error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }

  // Re-sum to shed the cancellation error of the running updates.
  std::complex<double> resummed{0.0, 0.0};
  double resummed_error = 0.0;
  const int count = static_cast<int>(heap.size());
  while (!heap.empty()) {
    resummed += heap.top().value;
    resummed_error += heap.top().error;
    heap.pop();
  }
  return {resummed, resummed_error, count, evaluations};
}

}  // namespace cavspin
