#pragma once

#include "seeco/error.hpp"
#include "seeco/numerics/autodiff.hpp"
#include "seeco/numerics/optim.hpp"
#include "seeco/numerics/rng.hpp"
#include "seeco/numerics/tensor.hpp"
#include "seeco/types.hpp"
#include "seeco/vlm/model.hpp"
#include "seeco/vlm/encoder.hpp"
#include "seeco/gcl.hpp"
#include "seeco/scl.hpp"
#include "seeco/oci.hpp"
#include "seeco/pipeline.hpp"
#include "seeco/bench/config.hpp"
#include "seeco/bench/metrics.hpp"
#include "seeco/bench/pnm.hpp"
#include "seeco/bench/report.hpp"
#include "seeco/bench/scene.hpp"
#include "seeco/bench/suite.hpp"
