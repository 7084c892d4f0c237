#ifndef PRIVTRANS_DATASET_IO_H_
#define PRIVTRANS_DATASET_IO_H_

#include <filesystem>
#include <vector>

#include "privtrans/dataset.h"

namespace privtrans {

// 8-bit PNG (gray for one channel, RGB for three), v -> round((v+1) * 127.5).
void WritePng(const ImageTensor& image, const std::filesystem::path& file);
// Maps byte k to k / 127.5 - 1. Throws IngestionError on unreadable files.
ImageTensor ReadPng(const std::filesystem::path& file);

// Writes `<id>_x.png` and, for labeled samples, `<id>_y.png` into `dir`.
void SavePairedFolder(const std::vector<PairedSample>& samples,
                      const std::filesystem::path& dir);
// Reads every `<id>_x.png` in `dir`, sorted by id. With `labeled` set, a
// missing `<id>_y.png` is an IngestionError naming the id; a `_y` file
// without its `_x` is always an error. An empty folder gives an empty list.
std::vector<PairedSample> LoadPairedFolder(const std::filesystem::path& dir,
                                           bool labeled = true);

// Layout: train/, proxy/, test/ plus a manifest.json listing ids per split.
// Proxy ground truths go to proxy_truths/, read only by LoadDataset into
// the vault.
void SaveDataset(const DatasetSplits& splits, const std::filesystem::path& root);
DatasetSplits LoadDataset(const std::filesystem::path& root);

}  // namespace privtrans

#endif  // PRIVTRANS_DATASET_IO_H_
