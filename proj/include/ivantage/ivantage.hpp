#pragma once

#include "ivantage/model.hpp"
#include "ivantage/random.hpp"
#include "ivantage/simnet.hpp"
#include "ivantage/transport.hpp"
#include "ivantage/discovery.hpp"
#include "ivantage/ratelimit.hpp"
#include "ivantage/isav.hpp"
#include "ivantage/reach.hpp"
#include "ivantage/io.hpp"
#include "ivantage/demo.hpp"
#include "ivantage/campaign.hpp"
