// dsl-toolkit is Copyright(c) 2026 the dsl-toolkit authors.
// The dsl-toolkit source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef DSL_DSL_HPP
#define DSL_DSL_HPP

#include "dsl/calibration.hpp"
#include "dsl/common.hpp"
#include "dsl/correspondence.hpp"
#include "dsl/demo.hpp"
#include "dsl/forward_sim.hpp"
#include "dsl/geometry.hpp"
#include "dsl/image.hpp"
#include "dsl/io.hpp"
#include "dsl/metrics.hpp"
#include "dsl/parallel.hpp"
#include "dsl/patterns.hpp"
#include "dsl/reconstruction.hpp"
#include "dsl/rng.hpp"
#include "dsl/scene.hpp"
#include "dsl/spectral.hpp"

#endif  // DSL_DSL_HPP
