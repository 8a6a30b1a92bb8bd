#!/usr/bin/env node
// trainer CLI: train a toy eps-network on phantom/condition pairs, or serve
// a checkpoint (or the pinned reference function) over the wire protocol.

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadDataset, loadTrainConfig, saveCheckpoint, train } from "./train.js";
import { installShutdownHandlers, serve } from "./serve.js";

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .scriptName("trainer")
    .command(
      "train",
      "train from a JSON config and write a checkpoint",
      (y) => y.option("config", {
        type: "string",
        demandOption: true,
        describe: "path to the training config JSON",
      }),
      (argv) => {
        const cfg = loadTrainConfig(argv.config);
        const dataset = loadDataset(cfg.dataDir);
        console.log(
          `training on ${dataset.length} pairs of ${dataset[0].size}x` +
          `${dataset[0].size}, T=${cfg.T}, ${cfg.epochs} epochs`);
        const started = Date.now();
        const result = train(cfg, dataset, console.log);
        const minutes = ((Date.now() - started) / 60000).toFixed(1);
        saveCheckpoint(cfg.checkpointPath, result.net, cfg);
        console.log(
          `done in ${minutes} min: loss ${result.firstWindowMean.toFixed(6)} -> ` +
          `${result.lastWindowMean.toFixed(6)}, checkpoint ${cfg.checkpointPath}`);
      },
    )
    .command(
      "serve",
      "answer denoiser protocol requests",
      (y) => y
        .option("checkpoint", {
          type: "string",
          describe: "checkpoint written by `trainer train`",
        })
        .option("listen", {
          type: "string",
          demandOption: true,
          describe: "host:port to bind (port 0 picks a free one)",
        })
        .option("reference", {
          type: "boolean",
          default: false,
          describe: "serve the pinned reference function instead of a model",
        }),
      async (argv) => {
        const server = await serve({
          checkpointPath: argv.checkpoint ?? null,
          listen: argv.listen,
          reference: argv.reference,
        });
        installShutdownHandlers(server);
      },
    )
    .demandCommand(1)
    .strict()
    .help()
    .parseAsync();
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
