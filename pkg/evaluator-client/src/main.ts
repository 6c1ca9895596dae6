#!/usr/bin/env node
/** Entry point: serve the demo trainer over stdio until shutdown. */

import { EvaluatorServer } from "./protocol.js";
import { demoTrain } from "./trainer.js";

process.stdout.on("error", (err: NodeJS.ErrnoException) => {
  // host went away mid-write
  process.exit(err.code === "EPIPE" ? 1 : 2);
});

const server = new EvaluatorServer(demoTrain, {
  onShutdown: () => process.exit(0),
});

server.serve(process.stdin, process.stdout).then(() => process.exit(0));
