import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    testTimeout: 120_000,
    hookTimeout: 30_000,
    // Kernel invocations are CPU-bound on the same box; serialize files.
    fileParallelism: false,
  },
});
