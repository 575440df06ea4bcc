#ifndef TSPLINE_TSPLINE_HPP
#define TSPLINE_TSPLINE_HPP

#include "tspline/error.hpp"
#include "tspline/banded.hpp"
#include "tspline/basis.hpp"
#include "tspline/spline.hpp"
#include "tspline/distributions.hpp"
#include "tspline/optimize.hpp"
#include "tspline/polynomial.hpp"
#include "tspline/spectral.hpp"
#include "tspline/smoothing.hpp"
#include "tspline/track.hpp"
#include "tspline/bivariate.hpp"
#include "tspline/robust.hpp"
#include "tspline/synthetic.hpp"
#include "tspline/experiment.hpp"

#endif  // TSPLINE_TSPLINE_HPP
