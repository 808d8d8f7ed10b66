import init, { blur_rgba, kernel_profile, pr_curve } from "./pkg/anonbench_wasm_demo.js";

const $ = (id) => document.getElementById(id);

// Procedural scene: sky gradient, road, and a few textured "faces" and "plates".
function drawScene(ctx) {
  const { width: w, height: h } = ctx.canvas;
  const sky = ctx.createLinearGradient(0, 0, 0, h);
  sky.addColorStop(0, "#8fb8de");
  sky.addColorStop(1, "#e8e2d0");
  ctx.fillStyle = sky;
  ctx.fillRect(0, 0, w, h);
  ctx.fillStyle = "#555";
  ctx.fillRect(0, h * 0.7, w, h * 0.3);

  const face = (x, y, r) => {
    ctx.fillStyle = "#e0b090";
    ctx.beginPath();
    ctx.ellipse(x, y, r, r * 1.2, 0, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#222";
    for (const dx of [-0.4, 0.4]) {
      ctx.beginPath();
      ctx.arc(x + dx * r, y - 0.2 * r, r * 0.12, 0, 2 * Math.PI);
      ctx.fill();
    }
    ctx.strokeStyle = "#7a3b2e";
    ctx.lineWidth = Math.max(1, r * 0.08);
    ctx.beginPath();
    ctx.arc(x, y + 0.25 * r, r * 0.45, 0.15 * Math.PI, 0.85 * Math.PI);
    ctx.stroke();
  };
  face(90, 110, 34);
  face(230, 95, 22);
  face(360, 130, 45);

  ctx.fillStyle = "#f4f4f4";
  ctx.fillRect(300, 250, 110, 32);
  ctx.fillStyle = "#111";
  ctx.font = "bold 22px monospace";
  ctx.fillText("AB 123 C", 306, 274);
}

function drawKernel(sigma) {
  const ctx = $("kernel").getContext("2d");
  const { width: w, height: h } = ctx.canvas;
  ctx.clearRect(0, 0, w, h);
  const weights = kernel_profile(sigma);
  const peak = Math.max(...weights);
  const bar = w / weights.length;
  ctx.fillStyle = "#3b6ea5";
  weights.forEach((v, i) => {
    const bh = (v / peak) * (h - 10);
    ctx.fillRect(i * bar, h - bh, Math.max(1, bar - 1), bh);
  });
  $("kernel-sigma").textContent = `${sigma.toFixed(2)} (${weights.length} taps)`;
}

function setupBlur() {
  const canvas = $("scene");
  const ctx = canvas.getContext("2d", { willReadFrequently: true });
  drawScene(ctx);

  let start = null;
  let snapshot = null;
  const pos = (ev) => {
    const r = canvas.getBoundingClientRect();
    return [ev.clientX - r.left, ev.clientY - r.top];
  };

  canvas.addEventListener("pointerdown", (ev) => {
    start = pos(ev);
    snapshot = ctx.getImageData(0, 0, canvas.width, canvas.height);
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!start) return;
    const [x, y] = pos(ev);
    ctx.putImageData(snapshot, 0, 0);
    ctx.strokeStyle = "#e33";
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(start[0], start[1], x - start[0], y - start[1]);
    ctx.setLineDash([]);
  });
  canvas.addEventListener("pointerup", (ev) => {
    if (!start) return;
    const [x1, y1] = pos(ev);
    const [x0, y0] = start;
    start = null;
    ctx.putImageData(snapshot, 0, 0);
    const w = Math.abs(x1 - x0);
    const h = Math.abs(y1 - y0);
    if (w < 2 || h < 2) return;

    const image = ctx.getImageData(0, 0, canvas.width, canvas.height);
    const pixels = new Uint8Array(image.data.buffer);
    try {
      const summary = JSON.parse(blur_rgba(
        pixels, canvas.width, canvas.height,
        Math.min(x0, x1), Math.min(y0, y1), w, h,
        Number($("margin").value), Number($("sigma-scale").value),
      ));
      image.data.set(pixels);
      ctx.putImageData(image, 0, 0);
      if (summary.region) {
        const [bx, by, bw, bh] = summary.region.bbox.map((v) => v.toFixed(1));
        $("region-out").textContent = `(${bx}, ${by}, ${bw}, ${bh}), sigma ${summary.region.sigma.toFixed(2)}`;
        drawKernel(summary.region.sigma);
      }
    } catch (err) {
      $("status").textContent = String(err);
    }
  });

  for (const id of ["margin", "sigma-scale"]) {
    $(id).addEventListener("input", () => {
      $(`${id}-out`).textContent = Number($(id).value).toFixed(id === "margin" ? 2 : 3);
    });
  }
  $("reset").addEventListener("click", () => drawScene(ctx));
  drawKernel(4);
}

function drawPr() {
  const iou = Number($("iou").value);
  const noise = Number($("noise").value);
  const seed = Math.max(0, Math.floor(Number($("seed").value) || 0));
  $("iou-out").textContent = iou.toFixed(2);
  $("noise-out").textContent = noise.toFixed(2);

  const res = JSON.parse(pr_curve(seed, 60, noise, iou));
  const ctx = $("pr").getContext("2d");
  const { width: w, height: h } = ctx.canvas;
  const pad = 30;
  const px = (r) => pad + r * (w - 2 * pad);
  const py = (p) => h - pad - p * (h - 2 * pad);

  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText("recall", w / 2 - 15, h - 8);
  ctx.fillText("precision", 2, pad - 10);

  // raw curve
  ctx.strokeStyle = "#c55";
  ctx.beginPath();
  res.points.forEach((pt, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, px(pt.recall), py(pt.precision)));
  ctx.stroke();

  // precision envelope: best precision at this recall or beyond
  let best = 0;
  const envelope = res.points.map((pt) => ({ ...pt })).reverse()
    .map((pt) => ((best = Math.max(best, pt.precision)), { recall: pt.recall, precision: best }))
    .reverse();
  ctx.strokeStyle = "#3b6ea5";
  ctx.lineWidth = 2;
  ctx.beginPath();
  envelope.forEach((pt, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, px(pt.recall), py(pt.precision)));
  ctx.stroke();
  ctx.lineWidth = 1;

  $("ap-out").textContent = res.ap.toFixed(3);
  $("ar-out").textContent = res.ar.toFixed(3);
  $("counts-out").textContent = `${res.total_gt} faces, ${res.detections} detections`;
}

async function main() {
  try {
    await init();
  } catch (err) {
    $("status").textContent = `could not load the wasm module: ${err}`;
    return;
  }
  setupBlur();
  for (const id of ["iou", "noise", "seed"]) $(id).addEventListener("input", drawPr);
  drawPr();
}

main();
