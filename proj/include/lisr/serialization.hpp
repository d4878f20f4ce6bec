#pragma once

// JSON conversions for configuration records. Readers fill missing keys
// with the struct defaults and reject unknown enum strings.

#include <json.hpp>

#include "lisr/autoencoder.hpp"
#include "lisr/corruption.hpp"
#include "lisr/diffusion.hpp"
#include "lisr/inversion.hpp"
#include "lisr/metrics.hpp"
#include "lisr/volume.hpp"

namespace lisr {

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

void to_json(nlohmann::json& j, const AutoencoderConfig& c);
void from_json(const nlohmann::json& j, AutoencoderConfig& c);

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

void to_json(nlohmann::json& j, const InversionConfig& c);
void from_json(const nlohmann::json& j, InversionConfig& c);

void to_json(nlohmann::json& j, const SsimOptions& o);
void from_json(const nlohmann::json& j, SsimOptions& o);

/// Declarative corruption description. Region and k-space masks are
/// referenced by path and loaded by the caller.
void to_json(nlohmann::json& j, const CorruptionDescriptor& d);
void from_json(const nlohmann::json& j, CorruptionDescriptor& d);

}  // namespace lisr
