#ifndef PRIVTRANS_CHECKPOINT_H_
#define PRIVTRANS_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include "privtrans/nets.h"

namespace privtrans {

enum class StorageType { kFloat32, kFloat64 };

// On disk: `manifest.json` (format version, arch, dtype, tensor names and
// shapes) plus one raw little-endian file per tensor. float64 storage
// round-trips exactly; float32 round-trips exactly from the second save on.
void SaveGenerator(const GeneratorModel& g, const std::filesystem::path& dir,
                   StorageType dtype = StorageType::kFloat64);
// Throws IngestionError on a missing or malformed checkpoint.
GeneratorModel LoadGenerator(const std::filesystem::path& dir);

void SaveDiscriminator(const DiscriminatorModel& d,
                       const std::filesystem::path& dir,
                       StorageType dtype = StorageType::kFloat64);
DiscriminatorModel LoadDiscriminator(const std::filesystem::path& dir);

// 64-bit FNV-1a over parameter names, shapes and raw bytes, as hex.
std::string Fingerprint(const ParamSet& params);

}  // namespace privtrans

#endif  // PRIVTRANS_CHECKPOINT_H_
