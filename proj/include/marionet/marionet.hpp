#pragma once

#include "marionet/core_model.hpp"
#include "marionet/defense.hpp"
#include "marionet/event_log.hpp"
#include "marionet/hash.hpp"
#include "marionet/keyspace.hpp"
#include "marionet/net.hpp"
#include "marionet/protocol.hpp"
#include "marionet/puppeteer.hpp"
#include "marionet/random.hpp"
#include "marionet/servant.hpp"
#include "marionet/simnet.hpp"
#include "marionet/sink.hpp"
#include "marionet/workloads.hpp"
