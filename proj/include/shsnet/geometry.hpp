#pragma once

#include "shsnet/geometry/io.hpp"
#include "shsnet/geometry/kd_index.hpp"
#include "shsnet/geometry/patch.hpp"
#include "shsnet/geometry/point_cloud.hpp"
#include "shsnet/geometry/shapes.hpp"
