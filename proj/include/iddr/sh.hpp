#pragma once

#include "iddr/common.hpp"

namespace iddr {

inline constexpr int kShDim = 16;

// Degree-4 real spherical-harmonics basis evaluated at a unit direction,
// the usual companion encoding for hash-grid radiance fields.
template <typename S>
inline void sh_encode(const Vec3<S>& dir, S* out) {
  const S x = dir[0], y = dir[1], z = dir[2];
  const S xx = x * x, yy = y * y, zz = z * z;
  const S xy = x * y, yz = y * z, xz = x * z;

  out[0] = S(0.28209479177387814);
  out[1] = S(-0.48860251190291987) * y;
  out[2] = S(0.48860251190291987) * z;
  out[3] = S(-0.48860251190291987) * x;
  out[4] = S(1.0925484305920792) * xy;
  out[5] = S(-1.0925484305920792) * yz;
  out[6] = S(0.94617469575755997) * zz - S(0.31539156525251999);
  out[7] = S(-1.0925484305920792) * xz;
  out[8] = S(0.54627421529603959) * (xx - yy);
  out[9] = S(0.59004358992664352) * y * (-S(3) * xx + yy);
  out[10] = S(2.8906114426405538) * xy * z;
  out[11] = S(0.45704579946446572) * y * (S(1) - S(5) * zz);
  out[12] = S(0.3731763325901154) * z * (S(5) * zz - S(3));
  out[13] = S(0.45704579946446572) * x * (S(1) - S(5) * zz);
  out[14] = S(1.4453057213202769) * z * (xx - yy);
  out[15] = S(0.59004358992664352) * x * (-xx + S(3) * yy);
}

}  // namespace iddr
