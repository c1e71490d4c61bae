#pragma once

#include "lorats/attack.hpp"
#include "lorats/detect.hpp"
#include "lorats/diffevo.hpp"
#include "lorats/error.hpp"
#include "lorats/fb_estimate.hpp"
#include "lorats/fft.hpp"
#include "lorats/io.hpp"
#include "lorats/onset.hpp"
#include "lorats/parallel.hpp"
#include "lorats/phy.hpp"
#include "lorats/profile_store.hpp"
#include "lorats/repro.hpp"
#include "lorats/signal.hpp"
#include "lorats/timestamping.hpp"
