import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // every test drives a Python child process; interpreter startup dominates
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
