#!/usr/bin/env node
"use strict";
// SMT-LIB2 REPL over stdin/stdout backed by the z3-solver WASM build.
// Behaves like `z3 -in` for pipe-based drivers: commands in, results out.
// Also accepts a script path argument: `z3 file.smt2`.

function loadZ3() {
  const candidates = ["z3-solver", "/usr/lib/node_modules/z3-solver"];
  for (const c of candidates) {
    try {
      return require(c);
    } catch (e) {
      /* try next */
    }
  }
  process.stderr.write("error: z3-solver npm package not found\n");
  process.exit(1);
}

// Split complete top-level s-expressions off the front of `buf`.
// Respects "..." string literals ("" escapes), |...| symbols and ; comments.
function splitComplete(buf) {
  let depth = 0;
  let start = -1;
  let lastEnd = -1;
  let inStr = false;
  let inSym = false;
  let inComment = false;
  const cmds = [];
  for (let i = 0; i < buf.length; i++) {
    const ch = buf[i];
    if (inComment) {
      if (ch === "\n") inComment = false;
      continue;
    }
    if (inStr) {
      if (ch === '"') {
        if (buf[i + 1] === '"') i++;
        else inStr = false;
      }
      continue;
    }
    if (inSym) {
      if (ch === "|") inSym = false;
      continue;
    }
    if (ch === ";") {
      inComment = true;
    } else if (ch === '"') {
      inStr = true;
    } else if (ch === "|") {
      inSym = true;
    } else if (ch === "(") {
      if (depth === 0) start = i;
      depth++;
    } else if (ch === ")") {
      depth--;
      if (depth === 0 && start >= 0) {
        cmds.push(buf.slice(start, i + 1));
        lastEnd = i + 1;
      }
      if (depth < 0) depth = 0;
    }
  }
  return { cmds, rest: lastEnd >= 0 ? buf.slice(lastEnd) : buf };
}

(async () => {
  const args = process.argv.slice(2);
  const fileArgs = args.filter((a) => !a.startsWith("-"));

  const { init } = loadZ3();
  const { Z3 } = await init();

  if (args.includes("--version") || args.includes("-version")) {
    process.stdout.write("Z3 version 4 (wasm shim)\n");
    process.exit(0);
  }

  const cfg = Z3.mk_config();
  let ctx = Z3.mk_context(cfg);

  async function evalBatch(text) {
    let out;
    try {
      out = await Z3.eval_smtlib2_string(ctx, text);
    } catch (e) {
      out = '(error "' + String(e).replace(/"/g, "'") + '")\n';
    }
    if (out && out.length) process.stdout.write(out);
  }

  if (fileArgs.length > 0) {
    const fs = require("fs");
    const text = fs.readFileSync(fileArgs[0], "utf8");
    const { cmds } = splitComplete(text);
    const body = [];
    for (const c of cmds) {
      if (/^\(\s*exit\s*\)$/.test(c)) break;
      body.push(c);
    }
    await evalBatch(body.join("\n"));
    process.exit(0);
  }

  let buf = "";
  let chain = Promise.resolve();

  // Handle (echo "...") in the shim itself: drivers use echo markers to
  // frame replies, and a parse abort inside eval_smtlib2_string would
  // otherwise swallow a trailing echo and wedge the driver.
  const echoRe = /^\(\s*echo\s+"((?:[^"]|"")*)"\s*\)$/;

  async function pump() {
    const { cmds, rest } = splitComplete(buf);
    buf = rest;
    if (cmds.length === 0) return;
    let batch = [];
    async function flush() {
      if (batch.length) {
        const text = batch.join("\n");
        batch = [];
        await evalBatch(text);
      }
    }
    for (const c of cmds) {
      const echo = echoRe.exec(c);
      if (/^\(\s*exit\s*\)$/.test(c)) {
        await flush();
        process.exit(0);
      } else if (echo) {
        await flush();
        process.stdout.write(echo[1].replace(/""/g, '"') + "\n");
      } else {
        batch.push(c);
      }
    }
    await flush();
  }

  process.stdin.setEncoding("utf8");
  process.stdin.on("data", (chunk) => {
    buf += chunk;
    chain = chain.then(pump);
  });
  process.stdin.on("end", () => {
    chain.then(() => process.exit(0));
  });
})().catch((e) => {
  process.stderr.write(String(e) + "\n");
  process.exit(1);
});
