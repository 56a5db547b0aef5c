#pragma once

#include "shsnet/training/adam.hpp"
#include "shsnet/training/losses.hpp"
#include "shsnet/training/trainer.hpp"
#include "shsnet/training/model_check.hpp"
