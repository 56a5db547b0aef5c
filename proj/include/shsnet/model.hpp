#pragma once

#include "shsnet/model/checkpoint.hpp"
#include "shsnet/model/config.hpp"
#include "shsnet/model/network.hpp"
#include "shsnet/model/params.hpp"
#include "shsnet/model/sampling.hpp"
