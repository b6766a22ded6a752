#pragma once

#include "qso_lab/error.hpp"
#include "qso_lab/simplex.hpp"
#include "qso_lab/tensor.hpp"
#include "qso_lab/evaluator.hpp"
#include "qso_lab/volterra.hpp"
#include "qso_lab/families.hpp"
#include "qso_lab/dynamics.hpp"
#include "qso_lab/gibbs.hpp"
#include "qso_lab/io.hpp"
#include "qso_lab/experiment.hpp"

namespace qso {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qso
