#pragma once

#include "iidob/numerics.hpp"
#include "iidob/stiff.hpp"
#include "iidob/system_model.hpp"
#include "iidob/observer.hpp"
#include "iidob/filter.hpp"
#include "iidob/tracking.hpp"
#include "iidob/safe_control.hpp"
#include "iidob/scenarios.hpp"
#include "iidob/config.hpp"
#include "iidob/simulation.hpp"
#include "iidob/output.hpp"
