#pragma once

#include "threshy/costs.hpp"
#include "threshy/dataset.hpp"
#include "threshy/error.hpp"
#include "threshy/fixtures.hpp"
#include "threshy/json_io.hpp"
#include "threshy/metrics.hpp"
#include "threshy/monitor.hpp"
#include "threshy/nsga2.hpp"
#include "threshy/optimizer.hpp"
#include "threshy/profile.hpp"
#include "threshy/task.hpp"
#include "threshy/thresholding.hpp"
#include "threshy/version.hpp"
