#pragma once

namespace hmb {

struct Point2 {
  double x1 = 0.0;
  double x2 = 0.0;
};

} // namespace hmb
