#pragma once

#include "curvinit/activation.hpp"
#include "curvinit/config.hpp"
#include "curvinit/curvature.hpp"
#include "curvinit/dataset.hpp"
#include "curvinit/errors.hpp"
#include "curvinit/experiments.hpp"
#include "curvinit/init.hpp"
#include "curvinit/loss.hpp"
#include "curvinit/network.hpp"
#include "curvinit/network_io.hpp"
#include "curvinit/stats.hpp"
#include "curvinit/train.hpp"
