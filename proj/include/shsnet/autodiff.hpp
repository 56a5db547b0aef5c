#pragma once

#include "shsnet/autodiff/grad_check.hpp"
#include "shsnet/autodiff/graph.hpp"
#include "shsnet/autodiff/ops.hpp"
#include "shsnet/autodiff/tensor.hpp"
