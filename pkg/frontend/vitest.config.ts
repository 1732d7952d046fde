import { defineConfig } from 'vitest/config'

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    fileParallelism: false, // the integration test binds a fixed port
    testTimeout: 30_000,
  },
})
