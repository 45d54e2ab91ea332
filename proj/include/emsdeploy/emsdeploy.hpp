#pragma once

#include "emsdeploy/analysis.hpp"
#include "emsdeploy/calibrate.hpp"
#include "emsdeploy/common.hpp"
#include "emsdeploy/demand.hpp"
#include "emsdeploy/dispatchflow.hpp"
#include "emsdeploy/geogrid.hpp"
#include "emsdeploy/ingest.hpp"
#include "emsdeploy/robust.hpp"
#include "emsdeploy/simcore.hpp"
#include "emsdeploy/stochastic.hpp"
#include "emsdeploy/synthetic.hpp"
#include "emsdeploy/timezone.hpp"
