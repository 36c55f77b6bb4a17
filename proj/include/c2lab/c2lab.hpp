#pragma once

#include "c2lab/base64.hpp"
#include "c2lab/c2_server.hpp"
#include "c2lab/codec.hpp"
#include "c2lab/detectors/prompt_scan.hpp"
#include "c2lab/detectors/traffic.hpp"
#include "c2lab/detectors/verdict.hpp"
#include "c2lab/detectors/whitelist.hpp"
#include "c2lab/error.hpp"
#include "c2lab/harness/blob.hpp"
#include "c2lab/harness/report.hpp"
#include "c2lab/harness/runner.hpp"
#include "c2lab/harness/scenario.hpp"
#include "c2lab/llm_proxy.hpp"
#include "c2lab/loopback.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/transport.hpp"
#include "c2lab/url.hpp"
#include "c2lab/vfs.hpp"
#include "c2lab/victim_agent.hpp"
