#pragma once

#include "rflab/calculus.hpp"
#include "rflab/config.hpp"
#include "rflab/core.hpp"
#include "rflab/curvature.hpp"
#include "rflab/field.hpp"
#include "rflab/flow.hpp"
#include "rflab/harness.hpp"
#include "rflab/io.hpp"
#include "rflab/norms.hpp"
#include "rflab/spectral.hpp"
