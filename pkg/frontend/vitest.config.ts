import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // acceptance timings are part of the contract, so keep files sequential
    fileParallelism: false,
    testTimeout: 120_000,
    hookTimeout: 600_000,
  },
});
