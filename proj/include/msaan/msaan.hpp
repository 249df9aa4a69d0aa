#pragma once

// Umbrella header for the whole engine.

#include "msaan/autograd.hpp"
#include "msaan/checkpoint.hpp"
#include "msaan/common.hpp"
#include "msaan/gradcheck_suite.hpp"
#include "msaan/image.hpp"
#include "msaan/kernel_grads.hpp"
#include "msaan/kernels.hpp"
#include "msaan/metrics.hpp"
#include "msaan/model.hpp"
#include "msaan/optim.hpp"
#include "msaan/pipeline.hpp"
#include "msaan/tensor.hpp"
#include "msaan/train.hpp"
