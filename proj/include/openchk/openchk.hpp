#pragma once

#include "openchk/apps.hpp"
#include "openchk/comm.hpp"
#include "openchk/container.hpp"
#include "openchk/diff.hpp"
#include "openchk/error.hpp"
#include "openchk/flush_agent.hpp"
#include "openchk/harness.hpp"
#include "openchk/levels.hpp"
#include "openchk/manifest.hpp"
#include "openchk/pragma.hpp"
#include "openchk/replay.hpp"
#include "openchk/runtime.hpp"
#include "openchk/storage.hpp"
#include "openchk/translator.hpp"
