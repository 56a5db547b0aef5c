#pragma once

#include "shsnet/eval/export.hpp"
#include "shsnet/eval/metrics.hpp"
