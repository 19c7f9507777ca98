#pragma once

#include "vlcuav/channel.hpp"
#include "vlcuav/checkpoint.hpp"
#include "vlcuav/deployment.hpp"
#include "vlcuav/error.hpp"
#include "vlcuav/geometry.hpp"
#include "vlcuav/gmm.hpp"
#include "vlcuav/grid.hpp"
#include "vlcuav/gru.hpp"
#include "vlcuav/io.hpp"
#include "vlcuav/pipeline.hpp"
#include "vlcuav/scenario.hpp"
