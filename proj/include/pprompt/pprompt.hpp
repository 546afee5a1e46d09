#pragma once

#include "pprompt/adaptation.hpp"
#include "pprompt/config.hpp"
#include "pprompt/core.hpp"
#include "pprompt/diagnostics.hpp"
#include "pprompt/encoders.hpp"
#include "pprompt/energy.hpp"
#include "pprompt/json_io.hpp"
#include "pprompt/kernel.hpp"
#include "pprompt/kmeans.hpp"
#include "pprompt/pipeline.hpp"
#include "pprompt/prior_training.hpp"
#include "pprompt/samplers.hpp"
#include "pprompt/world.hpp"
